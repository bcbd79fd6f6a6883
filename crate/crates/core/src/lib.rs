//! Fuzzy clustering with weighted points and per-cluster capacity targets.
//!
//! The membership update for fuzzifier `m = 2` is a convex quadratic program
//! with a diagonal Hessian; [`qp`] solves it through a Schur-complement
//! reduction of its KKT system, with a primal active-set wrapper for the
//! `[0, 1]` bounds. [`clustering`] alternates that step with the usual
//! centroid update.
//!
//! ```
//! use capfuzz::clustering::{fit_capacitated, InitStrategy};
//! use capfuzz::model::{validate_problem, ProblemSpec};
//! use ndarray::array;
//!
//! let points = array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
//! let spec = ProblemSpec::new(points, vec![1.0, 1.0, 1.0, 3.0], vec![2.0, 4.0]);
//! let problem = validate_problem(&spec).unwrap();
//! let fit = fit_capacitated(&problem, &InitStrategy::seeded(7)).unwrap();
//! assert!(fit.capacity_residual_trace.last().unwrap() < &1e-9);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clustering;
pub mod data_io;
pub mod error;
pub mod metrics;
pub mod model;
pub mod qp;

pub use error::{Error, Result};
