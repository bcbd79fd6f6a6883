//! Independent reference solvers and instance generators shared by the
//! integration suites. Nothing here calls into `capfuzz::qp`.

#![allow(dead_code)]

use capfuzz::model::{validate_problem, ProblemSpec, Tolerances, ValidatedProblem};
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A membership QP instance: squared distances `q` (g×n), weights, capacities.
#[derive(Debug, Clone)]
pub struct QpInstance {
    pub q: Array2<f64>,
    pub z: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Random instance with `g ≤ 4`, `g ≤ n ≤ 12`, squared distances in
/// `[0.1, 10]`, weights in `[0.5, 2]` and capacities `μ = U z` for a random
/// column-stochastic `U`. Skewed `U` columns make capacities uneven so that
/// bounds become active on a good share of instances.
pub fn random_instance(rng: &mut ChaCha8Rng) -> QpInstance {
    let g = rng.random_range(1..=4);
    let n = rng.random_range(g.max(2)..=12);
    let q = Array2::from_shape_fn((g, n), |_| rng.random_range(0.1..10.0));
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let sharpness = rng.random_range(1.0..6.0);
    let mut mu = vec![0.0; g];
    for &zj in &z {
        let raw: Vec<f64> = (0..g).map(|_| rng.random::<f64>().powf(sharpness)).collect();
        let total: f64 = raw.iter().sum();
        for i in 0..g {
            mu[i] += zj * raw[i] / total;
        }
    }
    QpInstance { q, z, mu }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Dense LU solve of the full KKT saddle system
///
/// ```text
/// [ 2Q  Hᵀ ] [v]   [0]
/// [ H   0  ] [λ] = [h]
/// ```
///
/// with variables ordered `t = i n + j` and the last capacity row dropped to
/// remove the single redundant constraint.
pub fn dense_kkt_equality(inst: &QpInstance) -> Array2<f64> {
    let (g, n) = inst.q.dim();
    let nv = g * n;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
        .map(|j| ((0..g).map(|i| (i * n + j, 1.0)).collect(), 1.0))
        .chain((0..g - 1).map(|i| ((0..n).map(|j| (i * n + j, inst.z[j])).collect(), inst.mu[i])))
        .collect();
    let size = nv + rows.len();
    let mut k = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..g {
        for j in 0..n {
            k[(i * n + j, i * n + j)] = 2.0 * inst.q[[i, j]];
        }
    }
    for (r, (entries, target)) in rows.iter().enumerate() {
        for &(t, coef) in entries {
            k[(nv + r, t)] = coef;
            k[(t, nv + r)] = coef;
        }
        rhs[nv + r] = *target;
    }
    let sol = k.lu().solve(&rhs).expect("saddle system is nonsingular");
    Array2::from_shape_fn((g, n), |(i, j)| sol[i * n + j])
}

/// Dense solve of the multiplier-space system `H Q⁻¹ Hᵀ λ = 2h` with the
/// last capacity multiplier pinned (size `n + g − 1`), followed by
/// `u = Q⁻¹ Hᵀ λ / 2`. This is the unstructured baseline for timing.
pub fn dense_reduced_solve(inst: &QpInstance) -> Array2<f64> {
    let (g, n) = inst.q.dim();
    let size = n + g - 1;
    let mut m = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for j in 0..n {
        let zj = inst.z[j];
        for i in 0..g {
            let w = 1.0 / inst.q[[i, j]];
            m[(j, j)] += w;
            if i < g - 1 {
                m[(j, n + i)] += zj * w;
                m[(n + i, j)] += zj * w;
                m[(n + i, n + i)] += zj * zj * w;
            }
        }
        rhs[j] = 2.0;
    }
    for i in 0..g - 1 {
        rhs[n + i] = 2.0 * inst.mu[i];
    }
    let sol = m.lu().solve(&rhs).expect("reduced system is nonsingular");
    Array2::from_shape_fn((g, n), |(i, j)| {
        let beta = if i < g - 1 { sol[n + i] } else { 0.0 };
        (sol[j] + beta * inst.z[j]) / (2.0 * inst.q[[i, j]])
    })
}

/// Euclidean projection of `v` onto `{u : Σ w_k u_k = c, 0 ≤ u ≤ 1}` by
/// locating the root of the piecewise-linear `τ ↦ Σ w_k clip(v_k − τ w_k)`.
pub fn project_weighted_capped(v: &[f64], w: &[f64], c: f64) -> Vec<f64> {
    let load = |tau: f64| -> f64 {
        v.iter()
            .zip(w)
            .map(|(&vk, &wk)| wk * (vk - tau * wk).clamp(0.0, 1.0))
            .sum()
    };
    let mut breaks: Vec<f64> = v
        .iter()
        .zip(w)
        .flat_map(|(&vk, &wk)| [vk / wk, (vk - 1.0) / wk])
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // load is nonincreasing in τ: full at the smallest break, zero at the largest.
    let mut hi_ix = breaks.len() - 1;
    for (k, &b) in breaks.iter().enumerate() {
        if load(b) <= c {
            hi_ix = k;
            break;
        }
    }
    let tau = if hi_ix == 0 {
        breaks[0]
    } else {
        let (t0, t1) = (breaks[hi_ix - 1], breaks[hi_ix]);
        let (f0, f1) = (load(t0), load(t1));
        if f0 == f1 {
            t1
        } else {
            t0 + (f0 - c) * (t1 - t0) / (f0 - f1)
        }
    };
    v.iter()
        .zip(w)
        .map(|(&vk, &wk)| (vk - tau * wk).clamp(0.0, 1.0))
        .collect()
}

/// Dykstra's alternating projection onto the membership polytope: columns
/// normalized to sum one, rows normalized to their weighted capacity, each
/// within `[0, 1]`. Converges to the exact Euclidean projection.
pub fn project_polytope(y: &Array2<f64>, z: &[f64], mu: &[f64]) -> Array2<f64> {
    let (g, n) = y.dim();
    let ones = vec![1.0; g];
    let mut x = y.clone();
    let mut p = Array2::<f64>::zeros((g, n));
    let mut r = Array2::<f64>::zeros((g, n));
    for _ in 0..100_000 {
        // columns
        let shifted = &x + &p;
        let mut a = Array2::<f64>::zeros((g, n));
        for j in 0..n {
            let col: Vec<f64> = shifted.column(j).to_vec();
            let proj = project_weighted_capped(&col, &ones, 1.0);
            for i in 0..g {
                a[[i, j]] = proj[i];
            }
        }
        p = &shifted - &a;
        // rows
        let shifted = &a + &r;
        let mut b = Array2::<f64>::zeros((g, n));
        for i in 0..g {
            let row: Vec<f64> = shifted.row(i).to_vec();
            let proj = project_weighted_capped(&row, z, mu[i]);
            for j in 0..n {
                b[[i, j]] = proj[j];
            }
        }
        r = &shifted - &b;
        let change = max_abs_diff(&b, &x);
        let gap = max_abs_diff(&a, &b);
        x = b;
        if change < 1e-15 && gap < 1e-14 {
            break;
        }
    }
    x
}

/// Projected gradient on `Σ u² q` with step `1 / (2 max q)`, at most 10⁶
/// iterations, stopping once an iteration moves no entry by more than 1e-13.
pub fn projected_gradient_box(inst: &QpInstance) -> Array2<f64> {
    let (g, n) = inst.q.dim();
    let total: f64 = inst.mu.iter().sum();
    let mut u = Array2::from_shape_fn((g, n), |(i, _)| inst.mu[i] / total);
    let step = 1.0 / (2.0 * inst.q.iter().copied().fold(0.0, f64::max));
    for _ in 0..1_000_000 {
        let grad = &u * &inst.q * 2.0;
        let next = project_polytope(&(&u - &(grad * step)), &inst.z, &inst.mu);
        let change = max_abs_diff(&next, &u);
        u = next;
        if change < 1e-13 {
            break;
        }
    }
    u
}

pub fn objective(u: &Array2<f64>, q: &Array2<f64>) -> f64 {
    u.iter().zip(q.iter()).map(|(a, b)| a * a * b).sum()
}

/// Points scattered around `g` random centres, random weights and a random
/// capacity split with every share at least a third of the even share.
pub fn random_problem(r: &mut ChaCha8Rng, n: usize, g: usize, tolerances: Tolerances) -> ValidatedProblem {
    let d = r.random_range(1..=4);
    let centres = Array2::from_shape_fn((g, d), |_| r.random_range(-10.0..10.0));
    let spread = r.random_range(0.3..4.0);
    let points = Array2::from_shape_fn((n, d), |(j, k)| {
        centres[[j % g, k]] + spread * r.random_range(-1.0..1.0)
    });
    let z: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let raw: Vec<f64> = (0..g).map(|_| r.random_range(1.0..3.0)).collect();
    let (total_z, total_raw): (f64, f64) = (z.iter().sum(), raw.iter().sum());
    let mu = raw.iter().map(|x| x / total_raw * total_z).collect();
    validate_problem(&ProblemSpec::new(points, z, mu).with_tolerances(tolerances)).unwrap()
}
