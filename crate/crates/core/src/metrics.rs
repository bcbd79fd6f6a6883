//! Clustering evaluation: objective value, hardening, Adjusted Rand Index
//! and capacity residuals.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MembershipMatrix;
use crate::qp::SquaredDistanceMatrix;

/// Crisp cluster assignment, one id per point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector(pub Vec<usize>);

impl LabelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of distinct ids present.
    pub fn n_distinct(&self) -> usize {
        let mut ids = self.0.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// `J = Σ_i Σ_j u_ij^m q_ij`.
pub fn objective(u: &MembershipMatrix, q: &SquaredDistanceMatrix, m: f64) -> Result<f64> {
    if u.values().dim() != q.values().dim() {
        return Err(Error::DimensionMismatch(format!(
            "memberships {:?} vs distances {:?}",
            u.values().dim(),
            q.values().dim()
        )));
    }
    if !(m > 1.0) {
        return Err(Error::InvalidParameter(format!("fuzzifier {m} must exceed 1")));
    }
    let pow = membership_power(m);
    Ok(u.values()
        .iter()
        .zip(q.values().iter())
        .map(|(&uij, &qij)| pow(uij) * qij)
        .sum())
}

/// `u ↦ u^m`, exact multiplication for the common `m = 2`.
pub(crate) fn membership_power(m: f64) -> impl Fn(f64) -> f64 {
    move |u| if m == 2.0 { u * u } else { u.max(0.0).powf(m) }
}

/// Per-point argmax over clusters; ties go to the lowest cluster id.
pub fn harden(u: &MembershipMatrix) -> LabelVector {
    let labels = (0..u.n_points())
        .map(|j| {
            let col = u.column(j);
            let mut best = 0;
            for (i, &v) in col.iter().enumerate().skip(1) {
                if v > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    LabelVector(labels)
}

fn pairs(count: usize) -> f64 {
    let c = count as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand Index under the permutation model.
///
/// Returns 1 when the chance-corrected form degenerates to `0/0` (for
/// example, both labellings put every point in a single cluster).
pub fn adjusted_rand_index(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut left = HashMap::new();
    let mut right = HashMap::new();
    let mut joint = HashMap::new();
    for (&x, &y) in a.0.iter().zip(&b.0) {
        *left.entry(x).or_insert(0usize) += 1;
        *right.entry(y).or_insert(0usize) += 1;
        *joint.entry((x, y)).or_insert(0usize) += 1;
    }
    let index: f64 = joint.values().map(|&c| pairs(c)).sum();
    let sum_left: f64 = left.values().map(|&c| pairs(c)).sum();
    let sum_right: f64 = right.values().map(|&c| pairs(c)).sum();
    let expected = sum_left * sum_right / pairs(n);
    let max_index = 0.5 * (sum_left + sum_right);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// `max_i |Σ_j u_ij z_j − μ_i| / μ_i`.
pub fn capacity_residual(u: &MembershipMatrix, z: &[f64], mu: &[f64]) -> Result<f64> {
    if u.n_points() != z.len() || u.n_clusters() != mu.len() {
        return Err(Error::DimensionMismatch(format!(
            "memberships {}x{}, {} weights, {} capacities",
            u.n_clusters(),
            u.n_points(),
            z.len(),
            mu.len()
        )));
    }
    Ok(u.values()
        .rows()
        .into_iter()
        .zip(mu)
        .map(|(row, &m)| {
            let load: f64 = row.iter().zip(z).map(|(u, w)| u * w).sum();
            (load - m).abs() / m
        })
        .fold(0.0, f64::max))
}
