//! Alternating minimization for capacity-constrained fuzzy clustering, plus
//! the unconstrained fuzzy c-means and equi-balanced baselines.
//!
//! Each iteration solves the membership QP for the current centroids, then
//! moves every centroid to the `u^m`-weighted mean of the data. Both steps
//! minimize the objective over their block of variables, so the objective
//! trace is non-increasing; the loop checks this every iteration.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{capacity_residual, membership_power, objective};
use crate::model::{
    validate_problem, Centroids, MembershipMatrix, ProblemSpec, Tolerances, ValidatedProblem,
};
use crate::qp::{
    build_squared_distances, solve_box_qp, solve_equality_qp, SquaredDistanceMatrix, BOX_SLACK,
};

/// Absolute slack allowed on the per-iteration objective decrease.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Relative objective change treated as rounding noise: the iteration
/// cannot make further progress and is stopped as converged.
pub const STAGNATION_TOL: f64 = 1e-14;
/// Mass below which a cluster is considered empty.
const EMPTY_CLUSTER_MASS: f64 = 1e-300;

/// How the first centroids are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// `g` distinct data points drawn by D²-weighted sampling from a seeded RNG.
    SeededPoints { seed: u64 },
    UserProvided(Centroids),
}

impl InitStrategy {
    pub fn seeded(seed: u64) -> Self {
        InitStrategy::SeededPoints { seed }
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub memberships: MembershipMatrix,
    pub centroids: Centroids,
    /// `J(U⁽ᵏ⁾, C⁽ᵏ⁾)` after each completed iteration.
    pub objective_trace: Vec<f64>,
    /// Relative capacity residual of `U⁽ᵏ⁾` after each iteration.
    pub capacity_residual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of squared distances raised to the clamp floor over the fit.
    pub clamp_events: usize,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Clamp floor `(1e-9 · diameter)²`, with the diameter approximated by the
/// diagonal of the data's bounding box.
pub fn clamp_floor_for(points: ArrayView2<'_, f64>) -> f64 {
    let diag2: f64 = points
        .axis_iter(Axis(1))
        .map(|col| {
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            (hi - lo) * (hi - lo)
        })
        .sum();
    let floor = 1e-18 * diag2;
    if floor > 0.0 && floor.is_finite() {
        floor
    } else {
        1e-18
    }
}

/// `c_i = Σ_j u_ij^m x_j / Σ_j u_ij^m`.
pub fn update_centroids(
    u: &MembershipMatrix,
    points: ArrayView2<'_, f64>,
    m: f64,
) -> Result<Centroids> {
    if u.n_points() != points.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} membership columns for {} points",
            u.n_points(),
            points.nrows()
        )));
    }
    let pow = membership_power(m);
    let weights = u.values().mapv(pow);
    let mut centroids = weights.dot(&points);
    for (i, mut row) in centroids.outer_iter_mut().enumerate() {
        let mass: f64 = weights.row(i).sum();
        if !(mass > EMPTY_CLUSTER_MASS) {
            return Err(Error::EmptyCluster { cluster: i });
        }
        row /= mass;
    }
    Ok(Centroids::new(centroids))
}

/// Picks starting centroids according to `init`.
pub fn initial_centroids(
    points: ArrayView2<'_, f64>,
    g: usize,
    init: &InitStrategy,
) -> Result<Centroids> {
    let (n, d) = points.dim();
    if g == 0 || g > n {
        return Err(Error::InvalidParameter(format!(
            "cannot seed {g} centroids from {n} points"
        )));
    }
    match init {
        InitStrategy::UserProvided(c) => {
            if c.values().dim() != (g, d) {
                return Err(Error::DimensionMismatch(format!(
                    "initial centroids are {:?}, expected ({g}, {d})",
                    c.values().dim()
                )));
            }
            Ok(c.clone())
        }
        InitStrategy::SeededPoints { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut chosen = vec![rng.random_range(0..n)];
            let sq = |a: usize, b: usize| -> f64 {
                points
                    .row(a)
                    .iter()
                    .zip(points.row(b).iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum()
            };
            let mut nearest: Vec<f64> = (0..n).map(|j| sq(j, chosen[0])).collect();
            nearest[chosen[0]] = 0.0;
            while chosen.len() < g {
                let total: f64 = nearest.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut pick = None;
                    for (j, &w) in nearest.iter().enumerate() {
                        if w > 0.0 {
                            pick = Some(j);
                            if target < w {
                                break;
                            }
                            target -= w;
                        }
                    }
                    pick
                } else {
                    None
                };
                // Duplicate points leave no mass; fall back to the first unused index.
                let next = next
                    .filter(|j| !chosen.contains(j))
                    .unwrap_or_else(|| (0..n).find(|j| !chosen.contains(j)).unwrap());
                chosen.push(next);
                for (j, slot) in nearest.iter_mut().enumerate() {
                    *slot = slot.min(sq(j, next));
                }
                for &c in &chosen {
                    nearest[c] = 0.0;
                }
            }
            let values = Array2::from_shape_fn((g, d), |(i, k)| points[[chosen[i], k]]);
            Ok(Centroids::new(values))
        }
    }
}

/// Membership step of the capacity-constrained loop: the equality solution
/// when it is box-feasible, otherwise the active-set solution.
pub fn capacitated_membership(
    q: &SquaredDistanceMatrix,
    z: &[f64],
    mu: &[f64],
) -> Result<MembershipMatrix> {
    let (u, _) = solve_equality_qp(q, z, mu)?;
    if u.is_box_feasible(BOX_SLACK) {
        return Ok(MembershipMatrix::new(u.into_inner().mapv(|x| x.clamp(0.0, 1.0))));
    }
    log::debug!("equality solution leaves the box; switching to active set");
    let (u, _, _) = solve_box_qp(q, z, mu)?;
    Ok(u)
}

/// One membership + centroid update from `centroids`.
pub fn capacitated_step(
    problem: &ValidatedProblem,
    centroids: &Centroids,
) -> Result<(MembershipMatrix, Centroids)> {
    let floor = clamp_floor_for(problem.points());
    let q = build_squared_distances(problem.points(), centroids.values(), floor)?;
    let u = capacitated_membership(&q, problem.weights(), problem.capacities())?;
    let c = update_centroids(&u, problem.points(), 2.0)?;
    Ok((u, c))
}

/// Unconstrained fuzzy c-means membership. Points coinciding with one or
/// more centroids (distance at the clamp floor) split their membership
/// equally among those centroids.
fn fcm_membership(q: &SquaredDistanceMatrix, m: f64) -> MembershipMatrix {
    let qv = q.values();
    let floor = q.clamp_floor();
    let (g, n) = qv.dim();
    let exponent = 1.0 / (m - 1.0);
    let mut u = Array2::zeros((g, n));
    for j in 0..n {
        let col = qv.column(j);
        let coincident = col.iter().filter(|&&v| v <= floor).count();
        if coincident > 0 {
            for i in 0..g {
                if col[i] <= floor {
                    u[[i, j]] = 1.0 / coincident as f64;
                }
            }
            continue;
        }
        for i in 0..g {
            let denom: f64 = col.iter().map(|&qk| (col[i] / qk).powf(exponent)).sum();
            u[[i, j]] = 1.0 / denom;
        }
    }
    MembershipMatrix::new(u)
}

/// Shared alternating-minimization driver. Stops once no centroid moves by
/// `convergence_tol` or more, when the objective stagnates at rounding
/// level, or after `max_iterations`.
fn alternate<F>(
    problem: &ValidatedProblem,
    init: &InitStrategy,
    m: f64,
    mut membership: F,
) -> Result<FitResult>
where
    F: FnMut(&SquaredDistanceMatrix) -> Result<MembershipMatrix>,
{
    let points = problem.points();
    let tol = problem.tolerances();
    let floor = clamp_floor_for(points);

    let mut centroids = initial_centroids(points, problem.n_clusters(), init)?;
    let mut q = build_squared_distances(points, centroids.values(), floor)?;
    let mut clamp_events = q.clamp_count();

    let mut objective_trace: Vec<f64> = Vec::new();
    let mut capacity_residual_trace = Vec::new();
    let mut converged = false;
    let mut memberships = None;
    let mut iterations = 0;

    while iterations < tol.max_iterations {
        iterations += 1;
        let u = membership(&q)?;
        let next = update_centroids(&u, points, m)?;
        let next_q = build_squared_distances(points, next.values(), floor)?;
        clamp_events += next_q.clamp_count();

        let value = objective(&u, &next_q, m)?;
        capacity_residual_trace.push(capacity_residual(&u, problem.weights(), problem.capacities())?);

        let previous = objective_trace.last().copied();
        if let Some(prev) = previous {
            if value > prev + MONOTONE_SLACK.max(1e-12 * prev.abs()) {
                return Err(Error::NonMonotoneObjective {
                    iteration: iterations,
                    previous: prev,
                    current: value,
                });
            }
        }
        objective_trace.push(value);

        let displacement = next.max_displacement(&centroids);
        let stalled =
            previous.is_some_and(|prev| (prev - value).abs() <= STAGNATION_TOL * (1.0 + value.abs()));
        log::debug!("iteration {iterations}: J = {value:.12e}, displacement = {displacement:.3e}");

        centroids = next;
        q = next_q;
        memberships = Some(u);
        if displacement < tol.convergence_tol || stalled {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        memberships: memberships.expect("max_iterations is at least one"),
        centroids,
        objective_trace,
        capacity_residual_trace,
        iterations,
        converged,
        clamp_events,
    })
}

/// Capacity-constrained fuzzy clustering with `m = 2`.
pub fn fit_capacitated(problem: &ValidatedProblem, init: &InitStrategy) -> Result<FitResult> {
    if problem.fuzzifier() != 2.0 {
        return Err(Error::UnsupportedFuzzifier(problem.fuzzifier()));
    }
    let (z, mu) = (problem.weights(), problem.capacities());
    alternate(problem, init, 2.0, |q| capacitated_membership(q, z, mu))
}

/// Standard fuzzy c-means with the problem's fuzzifier. Capacities are only
/// used to report residuals.
pub fn fit_fcm(problem: &ValidatedProblem, init: &InitStrategy) -> Result<FitResult> {
    let m = problem.fuzzifier();
    alternate(problem, init, m, |q| Ok(fcm_membership(q, m)))
}

/// Unit weights and equal capacities `n / g`.
pub fn equibalanced_problem(
    points: Array2<f64>,
    g: usize,
    tolerances: Tolerances,
) -> Result<ValidatedProblem> {
    if g == 0 {
        return Err(Error::InvalidParameter("number of clusters must be positive".into()));
    }
    let n = points.nrows();
    let spec = ProblemSpec::new(points, vec![1.0; n], vec![n as f64 / g as f64; g])
        .with_tolerances(tolerances);
    validate_problem(&spec)
}

/// Capacity-constrained fit with unit weights and equal capacities.
pub fn fit_equibalanced(
    points: Array2<f64>,
    g: usize,
    tolerances: Tolerances,
    init: &InitStrategy,
) -> Result<FitResult> {
    fit_capacitated(&equibalanced_problem(points, g, tolerances)?, init)
}
