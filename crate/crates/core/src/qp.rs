//! Membership step for `m = 2`: a convex QP with a diagonal Hessian.
//!
//! ```text
//! minimize    Σ_ij u_ij² q_ij
//! subject to  Σ_i u_ij       = 1     for every point j
//!             Σ_j u_ij z_j   = μ_i   for every cluster i
//!             0 ≤ u_ij ≤ 1           (box variant only)
//! ```
//!
//! Stationarity gives `u_ij = (α_j + β_i z_j) / (2 q_ij)` on free entries.
//! Substituting into the constraints yields the reduced normal equations
//!
//! ```text
//! [ S11   S12 ] [α]   [2 r]
//! [ S12ᵀ  S22 ] [β] = [2 s]
//! ```
//!
//! with `S11 = diag_j(Σ_i 1/q_ij)`, `S12[j,i] = z_j/q_ij` and
//! `S22 = diag_i(Σ_j z_j²/q_ij)`. `S11` is diagonal, so α is eliminated in
//! `O(n g²)`, leaving a `g × g` Schur complement with a one-dimensional null
//! space (`β += c`, `α −= c z`). Pinning `β_{g−1} = 0` removes it and the
//! remaining `(g−1) × (g−1)` system is symmetric positive definite.
//!
//! The box-constrained problem is solved by a primal active-set method that
//! re-solves the same reduced system with pinned entries masked out.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::MembershipMatrix;

/// Relative pivot threshold of the dense Cholesky factorization.
const PIVOT_TOL: f64 = 1e-12;
/// Slack below which an equality solution counts as box-feasible.
pub const BOX_SLACK: f64 = 1e-12;
/// Feasibility slack used in the active-set ratio test.
const RATIO_SLACK: f64 = 1e-13;
/// Relative tolerance for a bound multiplier to count as negative.
const MULTIPLIER_TOL: f64 = 1e-11;

/// Clamped squared distances `q_ij = max(‖x_j − c_i‖², ε²)`, stored `g × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredDistanceMatrix {
    values: Array2<f64>,
    clamp_floor: f64,
    clamped: usize,
}

impl SquaredDistanceMatrix {
    /// Wraps precomputed squared distances, clamping entries below `clamp_floor`.
    pub fn from_values(mut values: Array2<f64>, clamp_floor: f64) -> Result<Self> {
        check_floor(clamp_floor)?;
        if values.iter().any(|q| q.is_nan() || *q < 0.0) {
            return Err(Error::InvalidParameter(
                "squared distances must be nonnegative".into(),
            ));
        }
        let mut clamped = 0;
        values.mapv_inplace(|q| {
            if q < clamp_floor {
                clamped += 1;
                clamp_floor
            } else {
                q
            }
        });
        Ok(Self {
            values,
            clamp_floor,
            clamped,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn clamp_floor(&self) -> f64 {
        self.clamp_floor
    }

    /// Number of entries raised to the clamp floor.
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    pub fn any_clamped(&self) -> bool {
        self.clamped > 0
    }

    pub fn n_clusters(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    /// Multiplies every entry (and the floor) by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: &self.values * factor,
            clamp_floor: self.clamp_floor * factor,
            clamped: self.clamped,
        }
    }
}

fn check_floor(clamp_floor: f64) -> Result<()> {
    if !(clamp_floor > 0.0) || !clamp_floor.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "clamp floor must be positive, got {clamp_floor}"
        )));
    }
    Ok(())
}

/// Squared distances between every centroid (rows of `centroids`) and every
/// point (rows of `points`), clamped from below.
pub fn build_squared_distances(
    points: ArrayView2<'_, f64>,
    centroids: ArrayView2<'_, f64>,
    clamp_floor: f64,
) -> Result<SquaredDistanceMatrix> {
    check_floor(clamp_floor)?;
    if points.ncols() != centroids.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "points have {} features, centroids {}",
            points.ncols(),
            centroids.ncols()
        )));
    }
    let (g, n) = (centroids.nrows(), points.nrows());
    let mut clamped = 0;
    let values = Array2::from_shape_fn((g, n), |(i, j)| {
        let q: f64 = points
            .row(j)
            .iter()
            .zip(centroids.row(i).iter())
            .map(|(x, c)| (x - c) * (x - c))
            .sum();
        if q < clamp_floor {
            clamped += 1;
            clamp_floor
        } else {
            q
        }
    });
    Ok(SquaredDistanceMatrix {
        values,
        clamp_floor,
        clamped,
    })
}

/// Equality-constraint multipliers, scaled so that free memberships are
/// `u_ij = (alpha_j + beta_i z_j) / (2 q_ij)`. The last `beta` is pinned to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KktMultipliers {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Status of a single membership entry in the active-set method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundState {
    #[default]
    Free,
    /// Pinned at `u = 0`.
    Lower,
    /// Pinned at `u = 1`.
    Upper,
}

/// Active bounds of the box-constrained solution together with their
/// multipliers (`γ_ij` for lower-active entries, `δ_ij` for upper-active).
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSetState {
    states: Array2<BoundState>,
    bound_multipliers: Array2<f64>,
}

impl ActiveSetState {
    /// All entries free.
    pub fn empty(n_clusters: usize, n_points: usize) -> Self {
        Self {
            states: Array2::default((n_clusters, n_points)),
            bound_multipliers: Array2::zeros((n_clusters, n_points)),
        }
    }

    /// Builds a state from explicit bound flags and multipliers.
    pub fn from_parts(states: Array2<BoundState>, bound_multipliers: Array2<f64>) -> Result<Self> {
        if states.dim() != bound_multipliers.dim() {
            return Err(Error::DimensionMismatch(
                "bound states and multipliers differ in shape".into(),
            ));
        }
        Ok(Self {
            states,
            bound_multipliers,
        })
    }

    pub fn state(&self, cluster: usize, point: usize) -> BoundState {
        self.states[[cluster, point]]
    }

    pub fn states(&self) -> ArrayView2<'_, BoundState> {
        self.states.view()
    }

    fn indices_with(&self, wanted: BoundState) -> Vec<(usize, usize)> {
        self.states
            .indexed_iter()
            .filter(|(_, &s)| s == wanted)
            .map(|(ix, _)| ix)
            .collect()
    }

    pub fn lower_active(&self) -> Vec<(usize, usize)> {
        self.indices_with(BoundState::Lower)
    }

    pub fn upper_active(&self) -> Vec<(usize, usize)> {
        self.indices_with(BoundState::Upper)
    }

    pub fn free(&self) -> Vec<(usize, usize)> {
        self.indices_with(BoundState::Free)
    }

    pub fn is_empty(&self) -> bool {
        self.states.iter().all(|&s| s == BoundState::Free)
    }

    /// `γ_ij`, zero unless the entry is lower-active.
    pub fn gamma(&self, cluster: usize, point: usize) -> f64 {
        match self.states[[cluster, point]] {
            BoundState::Lower => self.bound_multipliers[[cluster, point]],
            _ => 0.0,
        }
    }

    /// `δ_ij`, zero unless the entry is upper-active.
    pub fn delta(&self, cluster: usize, point: usize) -> f64 {
        match self.states[[cluster, point]] {
            BoundState::Upper => self.bound_multipliers[[cluster, point]],
            _ => 0.0,
        }
    }
}

fn check_shapes(q: &SquaredDistanceMatrix, z: &[f64], mu: &[f64]) -> Result<()> {
    let (g, n) = q.values.dim();
    if g == 0 || n == 0 {
        return Err(Error::EmptyData("empty distance matrix".into()));
    }
    if z.len() != n || mu.len() != g {
        return Err(Error::DimensionMismatch(format!(
            "distances are {g}x{n}, got {} weights and {} capacities",
            z.len(),
            mu.len()
        )));
    }
    Ok(())
}

/// In-place Cholesky solve of the dense SPD system `a x = b` (`a` row-major).
fn cholesky_solve(a: &mut [f64], dim: usize, b: &mut [f64]) -> Result<()> {
    let max_diag = (0..dim).map(|k| a[k * dim + k].abs()).fold(0.0, f64::max);
    let threshold = PIVOT_TOL * max_diag;
    for k in 0..dim {
        let mut pivot = a[k * dim + k];
        for p in 0..k {
            pivot -= a[k * dim + p] * a[k * dim + p];
        }
        if !(pivot > threshold) {
            return Err(Error::SingularReducedSystem { row: k, pivot });
        }
        let l_kk = pivot.sqrt();
        a[k * dim + k] = l_kk;
        for r in (k + 1)..dim {
            let mut v = a[r * dim + k];
            for p in 0..k {
                v -= a[r * dim + p] * a[k * dim + p];
            }
            a[r * dim + k] = v / l_kk;
        }
    }
    // forward: L y = b
    for r in 0..dim {
        let mut v = b[r];
        for p in 0..r {
            v -= a[r * dim + p] * b[p];
        }
        b[r] = v / a[r * dim + r];
    }
    // backward: Lᵀ x = y
    for r in (0..dim).rev() {
        let mut v = b[r];
        for p in (r + 1)..dim {
            v -= a[p * dim + r] * b[p];
        }
        b[r] = v / a[r * dim + r];
    }
    Ok(())
}

/// Solution of the masked equality subproblem.
struct MaskedSolution {
    u: Array2<f64>,
    mult: KktMultipliers,
    /// `α_j + β_i z_j` for every entry, evaluated without cancellation.
    shift: Array2<f64>,
}

/// Solves the equality-constrained QP restricted to the free entries of
/// `states`; pinned entries are held at their bound.
///
/// Per point `j`, with `w_i = 1/q_ij` over the free clusters and
/// `s = Σ_i w_i`, the Schur complement `S22 − S12ᵀ S11⁻¹ S12` receives
/// `z_j² (diag(w) − w wᵀ / s)`. That is a graph Laplacian with edge weights
/// `z_j² w_i w_k / s`, which is accumulated edge by edge: forming the
/// difference directly loses every digit once a clamped distance makes one
/// `w_i` dominate.
fn solve_masked(
    q: ArrayView2<'_, f64>,
    z: &[f64],
    mu: &[f64],
    states: &Array2<BoundState>,
) -> Result<MaskedSolution> {
    let (g, n) = q.dim();
    let reduced = g - 1;

    // Right-hand sides after moving upper-pinned entries across.
    let mut col_target = vec![1.0; n];
    let mut row_target = mu.to_vec();
    for ((i, j), &s) in states.indexed_iter() {
        if s == BoundState::Upper {
            col_target[j] -= 1.0;
            row_target[i] -= z[j];
        }
    }

    let mut inv_q = Array2::<f64>::zeros((g, n));
    let mut col_mass = vec![0.0; n];
    for ((i, j), &s) in states.indexed_iter() {
        if s == BoundState::Free {
            let w = 1.0 / q[[i, j]];
            inv_q[[i, j]] = w;
            col_mass[j] += w;
        }
    }

    // Grounded Laplacian over clusters 0..g-1 (β of the last cluster is 0).
    let mut schur = vec![0.0; reduced * reduced];
    let mut rhs: Vec<f64> = row_target[..reduced].iter().map(|s| 2.0 * s).collect();
    for j in 0..n {
        let mass = col_mass[j];
        if mass == 0.0 {
            continue;
        }
        let zj = z[j];
        for a in 0..g {
            let wa = inv_q[[a, j]];
            if wa == 0.0 {
                continue;
            }
            if a < reduced {
                rhs[a] -= 2.0 * zj * (wa / mass) * col_target[j];
            }
            for b in (a + 1)..g {
                let wb = inv_q[[b, j]];
                if wb == 0.0 {
                    continue;
                }
                let edge = zj * zj * (wa * wb / mass);
                if a < reduced {
                    schur[a * reduced + a] += edge;
                }
                if b < reduced {
                    schur[b * reduced + b] += edge;
                    schur[a * reduced + b] -= edge;
                    schur[b * reduced + a] -= edge;
                }
            }
        }
    }
    cholesky_solve(&mut schur, reduced, &mut rhs)?;
    let mut beta = rhs;
    beta.push(0.0);

    let mut alpha = vec![0.0; n];
    let mut u = Array2::<f64>::zeros((g, n));
    let mut shift = Array2::<f64>::zeros((g, n));
    for j in 0..n {
        let mass = col_mass[j];
        let zj = z[j];
        if mass == 0.0 {
            alpha[j] = pinned_column_alpha(q, z, &beta, states, j);
            for i in 0..g {
                shift[[i, j]] = alpha[j] + beta[i] * zj;
                if states[[i, j]] == BoundState::Upper {
                    u[[i, j]] = 1.0;
                }
            }
            continue;
        }
        let base = 2.0 * col_target[j] / mass;
        let weighted_beta: f64 = (0..g).map(|k| inv_q[[k, j]] / mass * beta[k]).sum();
        alpha[j] = base - zj * weighted_beta;
        for i in 0..g {
            let spread: f64 = (0..g)
                .map(|k| inv_q[[k, j]] / mass * (beta[i] - beta[k]))
                .sum();
            shift[[i, j]] = base + zj * spread;
            u[[i, j]] = match states[[i, j]] {
                BoundState::Free => {
                    let wi = inv_q[[i, j]];
                    let coupling: f64 = (0..g)
                        .map(|k| (wi * inv_q[[k, j]] / mass) * (beta[i] - beta[k]))
                        .sum();
                    wi / mass * col_target[j] + 0.5 * zj * coupling
                }
                BoundState::Lower => 0.0,
                BoundState::Upper => 1.0,
            };
        }
    }
    Ok(MaskedSolution {
        u,
        mult: KktMultipliers { alpha, beta },
        shift,
    })
}

/// α for a column without free entries: the midpoint of the interval that
/// keeps every bound multiplier of the column nonnegative.
fn pinned_column_alpha(
    q: ArrayView2<'_, f64>,
    z: &[f64],
    beta: &[f64],
    states: &Array2<BoundState>,
    j: usize,
) -> f64 {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (i, b) in beta.iter().enumerate() {
        match states[[i, j]] {
            BoundState::Upper => lo = lo.max(2.0 * q[[i, j]] - b * z[j]),
            BoundState::Lower => hi = hi.min(-b * z[j]),
            BoundState::Free => {}
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// Minimizer of `Σ u_ij² q_ij` under the column-sum and capacity equalities,
/// without box bounds. Entries may fall outside `[0, 1]`.
pub fn solve_equality_qp(
    q: &SquaredDistanceMatrix,
    z: &[f64],
    mu: &[f64],
) -> Result<(MembershipMatrix, KktMultipliers)> {
    check_shapes(q, z, mu)?;
    let states = Array2::default(q.values.dim());
    let sol = solve_masked(q.values(), z, mu, &states)?;
    Ok((MembershipMatrix::new(sol.u), sol.mult))
}

fn check_box_feasible(z: &[f64], mu: &[f64]) -> Result<()> {
    let weight_sum: f64 = z.iter().sum();
    let capacity_sum: f64 = mu.iter().sum();
    if let Some((i, m)) = mu
        .iter()
        .enumerate()
        .find(|(_, &m)| m < 0.0 || m > weight_sum * (1.0 + 1e-9))
    {
        return Err(Error::InfeasibleBoxProblem(format!(
            "capacity {i} = {m} outside [0, Σz = {weight_sum}]"
        )));
    }
    if let Some((j, w)) = z.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
        return Err(Error::InfeasibleBoxProblem(format!(
            "weight {j} = {w} is not positive"
        )));
    }
    if (capacity_sum - weight_sum).abs() > 1e-9 * weight_sum {
        return Err(Error::InfeasibleBoxProblem(format!(
            "Σμ = {capacity_sum} differs from Σz = {weight_sum}"
        )));
    }
    Ok(())
}

/// Minimizer of `Σ u_ij² q_ij` under the equalities and `0 ≤ u_ij ≤ 1`.
///
/// Primal active-set method started from the feasible point
/// `u_ij = μ_i / Σμ`, so its first subproblem is exactly the equality
/// solution. Each iteration re-solves the masked reduced system; a blocking
/// bound (smallest step ratio, lowest `(i, j)` on ties) is pinned, and at a
/// subproblem optimum the bound with the most negative multiplier is
/// released. Iterations are capped at `10 g n`.
pub fn solve_box_qp(
    q: &SquaredDistanceMatrix,
    z: &[f64],
    mu: &[f64],
) -> Result<(MembershipMatrix, KktMultipliers, ActiveSetState)> {
    check_shapes(q, z, mu)?;
    check_box_feasible(z, mu)?;
    let qv = q.values();
    let (g, n) = qv.dim();

    let mut states: Array2<BoundState> = Array2::default((g, n));
    let mut sol = solve_masked(qv, z, mu, &states)?;
    if sol.u.iter().all(|&u| (-BOX_SLACK..=1.0 + BOX_SLACK).contains(&u)) {
        sol.u.mapv_inplace(|u| u.clamp(0.0, 1.0));
        return Ok((
            MembershipMatrix::new(sol.u),
            sol.mult,
            ActiveSetState::empty(g, n),
        ));
    }

    let capacity_sum: f64 = mu.iter().sum();
    let mut current = Array2::from_shape_fn((g, n), |(i, _)| mu[i] / capacity_sum);
    let q_max = qv.iter().copied().fold(0.0, f64::max);
    let multiplier_tol = MULTIPLIER_TOL * 2.0 * q_max;
    let cap = (10 * g * n).max(10);

    for iteration in 0..cap {
        if iteration > 0 {
            sol = solve_masked(qv, z, mu, &states)?;
        }
        let target = &sol.u;

        let mut step = 1.0;
        let mut blocking = None;
        for ((i, j), &s) in states.indexed_iter() {
            if s != BoundState::Free {
                continue;
            }
            let (x, x_hat) = (current[[i, j]], target[[i, j]]);
            let candidate = if x_hat < -RATIO_SLACK {
                Some(((x / (x - x_hat)).max(0.0), BoundState::Lower))
            } else if x_hat > 1.0 + RATIO_SLACK {
                Some((((1.0 - x) / (x_hat - x)).max(0.0), BoundState::Upper))
            } else {
                None
            };
            if let Some((t, bound)) = candidate {
                if t < step || (blocking.is_none() && t <= step) {
                    step = t;
                    blocking = Some(((i, j), bound));
                }
            }
        }

        if let Some(((bi, bj), bound)) = blocking {
            for ((i, j), &s) in states.indexed_iter() {
                if s == BoundState::Free {
                    let x = current[[i, j]];
                    current[[i, j]] = x + step * (target[[i, j]] - x);
                }
            }
            current[[bi, bj]] = if bound == BoundState::Lower { 0.0 } else { 1.0 };
            states[[bi, bj]] = bound;
            continue;
        }

        current.assign(target);
        current.mapv_inplace(|u| u.clamp(0.0, 1.0));

        let bound_multipliers = bound_multipliers(qv, &sol.shift, &states);
        let mut release: Option<((usize, usize), f64)> = None;
        for ((i, j), &s) in states.indexed_iter() {
            if s == BoundState::Free {
                continue;
            }
            let value = bound_multipliers[[i, j]];
            if value < -multiplier_tol && release.is_none_or(|(_, best)| value < best) {
                release = Some(((i, j), value));
            }
        }
        match release {
            Some(((i, j), _)) => states[[i, j]] = BoundState::Free,
            None => {
                let state = ActiveSetState::from_parts(states, bound_multipliers)?;
                return Ok((MembershipMatrix::new(current), sol.mult, state));
            }
        }
    }
    Err(Error::ActiveSetStall { iterations: cap })
}

/// `γ_ij = −(α_j + β_i z_j)` on lower-active entries and
/// `δ_ij = α_j + β_i z_j − 2 q_ij` on upper-active ones; zero elsewhere.
fn bound_multipliers(
    q: ArrayView2<'_, f64>,
    shift: &Array2<f64>,
    states: &Array2<BoundState>,
) -> Array2<f64> {
    Array2::from_shape_fn(states.dim(), |(i, j)| {
        let shift = shift[[i, j]];
        match states[[i, j]] {
            BoundState::Free => 0.0,
            BoundState::Lower => -shift,
            BoundState::Upper => shift - 2.0 * q[[i, j]],
        }
    })
}

/// Largest absolute violation over the KKT families: stationarity, column
/// sums, capacities, bounds, multiplier signs and complementary slackness.
pub fn kkt_residual(
    u: &MembershipMatrix,
    mult: &KktMultipliers,
    state: &ActiveSetState,
    q: &SquaredDistanceMatrix,
    z: &[f64],
    mu: &[f64],
) -> Result<f64> {
    check_shapes(q, z, mu)?;
    let (g, n) = q.values.dim();
    if u.values().dim() != (g, n)
        || state.states.dim() != (g, n)
        || mult.alpha.len() != n
        || mult.beta.len() != g
    {
        return Err(Error::DimensionMismatch(
            "KKT residual operands disagree in shape".into(),
        ));
    }
    let uv = u.values();
    let qv = q.values();
    let mut worst: f64 = 0.0;

    for ((i, j), &uij) in uv.indexed_iter() {
        let gamma = state.gamma(i, j);
        let delta = state.delta(i, j);
        let stationarity =
            2.0 * uij * qv[[i, j]] - mult.alpha[j] - mult.beta[i] * z[j] - gamma + delta;
        worst = worst
            .max(stationarity.abs())
            .max(-uij)
            .max(uij - 1.0)
            .max(-gamma)
            .max(-delta)
            .max((gamma * uij).abs())
            .max((delta * (uij - 1.0)).abs());
    }
    for col in uv.columns() {
        worst = worst.max((col.sum() - 1.0).abs());
    }
    for (i, row) in uv.rows().into_iter().enumerate() {
        let load: f64 = row.iter().zip(z).map(|(u, w)| u * w).sum();
        worst = worst.max((load - mu[i]).abs());
    }
    Ok(worst)
}
