//! Problem instances, membership and centroid containers, and the
//! closed-form feasible starting membership.
//!
//! A problem is `n` weighted points in `d` dimensions and `g` clusters with
//! prescribed capacities. Memberships are stored cluster-major (`g × n`), so
//! row `i` holds every point's degree of membership in cluster `i`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Solver tolerances shared by the fitting loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance on `|Σμ − Σz| / Σz` and on constraint residuals.
    pub feasibility_tol: f64,
    /// Threshold on the largest centroid displacement between iterations.
    pub convergence_tol: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            convergence_tol: 1e-6,
            max_iterations: 300,
        }
    }
}

/// Raw, unvalidated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// `n × d` data matrix, one point per row.
    pub points: Array2<f64>,
    /// Per-point weights `z_j`, length `n`.
    pub weights: Vec<f64>,
    /// Per-cluster capacities `μ_i`, length `g`.
    pub capacities: Vec<f64>,
    pub fuzzifier: f64,
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    /// Builds a spec with `m = 2` and default tolerances.
    pub fn new(points: Array2<f64>, weights: Vec<f64>, capacities: Vec<f64>) -> Self {
        Self {
            points,
            weights,
            capacities,
            fuzzifier: 2.0,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn with_fuzzifier(mut self, m: f64) -> Self {
        self.fuzzifier = m;
        self
    }
}

/// A problem instance whose invariants have been checked.
///
/// Capacities are rescaled by `Σz / Σμ` so that the total-capacity condition
/// holds exactly in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedProblem {
    points: Array2<f64>,
    weights: Vec<f64>,
    capacities: Vec<f64>,
    fuzzifier: f64,
    tolerances: Tolerances,
}

impl ValidatedProblem {
    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn fuzzifier(&self) -> f64 {
        self.fuzzifier
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.capacities.len()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Checks every [`ProblemSpec`] invariant and returns the validated instance.
pub fn validate_problem(spec: &ProblemSpec) -> Result<ValidatedProblem> {
    let n = spec.points.nrows();
    let d = spec.points.ncols();
    let g = spec.capacities.len();
    if n == 0 {
        return Err(Error::EmptyData("no data points".into()));
    }
    if d == 0 {
        return Err(Error::EmptyData("points have zero features".into()));
    }
    if g == 0 {
        return Err(Error::EmptyData("no clusters".into()));
    }
    if spec.weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} points",
            spec.weights.len(),
            n
        )));
    }
    if g > n {
        return Err(Error::InvalidParameter(format!(
            "{g} clusters exceed {n} points"
        )));
    }
    if !(spec.fuzzifier > 1.0) || !spec.fuzzifier.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "fuzzifier must be finite and > 1, got {}",
            spec.fuzzifier
        )));
    }
    let tol = &spec.tolerances;
    if !(tol.feasibility_tol >= 0.0) || !(tol.convergence_tol > 0.0) || tol.max_iterations == 0 {
        return Err(Error::InvalidParameter(format!("bad tolerances {tol:?}")));
    }
    if spec.points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite coordinate".into()));
    }
    for (index, &value) in spec.weights.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveWeight { index, value });
        }
    }
    for (index, &value) in spec.capacities.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveCapacity { index, value });
        }
    }

    let weight_sum: f64 = spec.weights.iter().sum();
    let capacity_sum: f64 = spec.capacities.iter().sum();
    let relative_gap = (capacity_sum - weight_sum).abs() / weight_sum;
    if relative_gap > tol.feasibility_tol {
        return Err(Error::CapacityMismatch {
            capacity_sum,
            weight_sum,
            relative_gap,
        });
    }

    let scale = weight_sum / capacity_sum;
    Ok(ValidatedProblem {
        points: spec.points.clone(),
        weights: spec.weights.clone(),
        capacities: spec.capacities.iter().map(|mu| mu * scale).collect(),
        fuzzifier: spec.fuzzifier,
        tolerances: spec.tolerances,
    })
}

/// `g × n` matrix of membership degrees `u_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix(Array2<f64>);

impl MembershipMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_clusters(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, cluster: usize, point: usize) -> f64 {
        self.0[[cluster, point]]
    }

    /// Memberships of one point across all clusters.
    pub fn column(&self, point: usize) -> ArrayView1<'_, f64> {
        self.0.column(point)
    }

    /// `max_j |Σ_i u_ij − 1|`.
    pub fn column_sum_residual(&self) -> f64 {
        self.0
            .sum_axis(Axis(0))
            .iter()
            .fold(0.0, |acc, s| acc.max((s - 1.0).abs()))
    }

    /// True when every entry lies in `[−slack, 1 + slack]`.
    pub fn is_box_feasible(&self, slack: f64) -> bool {
        self.0.iter().all(|&u| u >= -slack && u <= 1.0 + slack)
    }
}

/// `g × d` matrix of cluster centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids(Array2<f64>);

impl Centroids {
    pub fn new(values: Array2<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_clusters(&self) -> usize {
        self.0.nrows()
    }

    /// Largest Euclidean distance between matching centroids.
    pub fn max_displacement(&self, other: &Centroids) -> f64 {
        self.0
            .outer_iter()
            .zip(other.0.outer_iter())
            .map(|(a, b)| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Membership `u_ij = μ_i / Σ_k μ_k`, identical for every point.
///
/// Every column sums to one and, because `Σμ = Σz`, each weighted row sum
/// `Σ_j u_ij z_j` equals `μ_i`. All entries lie strictly inside `(0, 1]`.
pub fn feasible_init_membership(problem: &ValidatedProblem) -> MembershipMatrix {
    let capacity_sum: f64 = problem.capacities.iter().sum();
    let n = problem.n_points();
    let g = problem.n_clusters();
    let values = Array2::from_shape_fn((g, n), |(i, _)| problem.capacities[i] / capacity_sum);
    MembershipMatrix(values)
}
