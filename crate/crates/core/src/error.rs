//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while validating, solving, fitting or loading.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Total capacity differs from total weight beyond the feasibility tolerance.
    #[error("capacity sum {capacity_sum} does not match weight sum {weight_sum} (relative gap {relative_gap:e})")]
    CapacityMismatch {
        capacity_sum: f64,
        weight_sum: f64,
        relative_gap: f64,
    },
    #[error("weight at index {index} is not positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("capacity at index {index} is not positive ({value})")]
    NonPositiveCapacity { index: usize, value: f64 },
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The capacity-constrained membership step is only derived for m = 2.
    #[error("fuzzifier m = {0} is not supported by the capacity-constrained solver (requires m = 2)")]
    UnsupportedFuzzifier(f64),

    /// The gauge-fixed Schur complement lost positive definiteness.
    #[error("reduced KKT system is singular (pivot {pivot:e} at row {row})")]
    SingularReducedSystem { row: usize, pivot: f64 },
    #[error("box-constrained membership problem is infeasible: {0}")]
    InfeasibleBoxProblem(String),
    #[error("active-set method stalled after {iterations} iterations")]
    ActiveSetStall { iterations: usize },
    #[error("cluster {cluster} lost all membership mass")]
    EmptyCluster { cluster: usize },
    #[error("objective increased at iteration {iteration}: {previous} -> {current}")]
    NonMonotoneObjective {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("label vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short stable name of the variant, used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CapacityMismatch { .. } => "CapacityMismatch",
            Error::NonPositiveWeight { .. } => "NonPositiveWeight",
            Error::NonPositiveCapacity { .. } => "NonPositiveCapacity",
            Error::EmptyData(_) => "EmptyData",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::UnsupportedFuzzifier(_) => "UnsupportedFuzzifier",
            Error::SingularReducedSystem { .. } => "SingularReducedSystem",
            Error::InfeasibleBoxProblem(_) => "InfeasibleBoxProblem",
            Error::ActiveSetStall { .. } => "ActiveSetStall",
            Error::EmptyCluster { .. } => "EmptyCluster",
            Error::NonMonotoneObjective { .. } => "NonMonotoneObjective",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::Parse { .. } => "ParseError",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::Io(_) => "Io",
        }
    }

    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularReducedSystem { .. }
                | Error::InfeasibleBoxProblem(_)
                | Error::ActiveSetStall { .. }
                | Error::EmptyCluster { .. }
                | Error::NonMonotoneObjective { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
