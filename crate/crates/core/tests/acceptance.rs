//! End-to-end acceptance checks. Runs sequentially so that timings are not
//! disturbed by other tests, prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::time::Instant;

use capfuzz::cli::{
    reports_to_json, run_compare, run_synth, Algorithm, CapacityField, DataSource, Report,
    RunConfig,
};
use capfuzz::clustering::{capacitated_membership, fit_capacitated, InitStrategy};
use capfuzz::model::{feasible_init_membership, Tolerances};
use capfuzz::qp::{kkt_residual, solve_box_qp, solve_equality_qp, SquaredDistanceMatrix};
use common::{
    dense_kkt_equality, dense_reduced_solve, max_abs_diff, projected_gradient_box,
    random_instance, random_problem, rng, QpInstance,
};
use ndarray::Array2;
use rand::Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dist(q: &Array2<f64>) -> SquaredDistanceMatrix {
    SquaredDistanceMatrix::from_values(q.clone(), 1e-18).unwrap()
}

fn qp_family() -> Vec<QpInstance> {
    let mut r = rng(2024);
    (0..200).map(|_| random_instance(&mut r)).collect()
}

fn equality_oracle() -> Outcome {
    let family = qp_family();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in &family {
        let (u, _) = solve_equality_qp(&dist(&inst.q), &inst.z, &inst.mu).unwrap();
        worst = worst.max(max_abs_diff(&u.into_inner(), &dense_kkt_equality(inst)));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 5.0,
        format!("200 instances, max |u - u_dense| = {worst:.2e} (<= 1e-8), {secs:.3} s (< 5 s)"),
    )
}

fn box_oracle() -> Outcome {
    let family = qp_family();
    let start = Instant::now();
    let (mut worst, mut worst_kkt, mut with_bounds) = (0.0f64, 0.0f64, 0);
    for inst in &family {
        let q = dist(&inst.q);
        let (u, mult, state) = solve_box_qp(&q, &inst.z, &inst.mu).unwrap();
        with_bounds += usize::from(!state.is_empty());
        worst_kkt = worst_kkt.max(kkt_residual(&u, &mult, &state, &q, &inst.z, &inst.mu).unwrap());
        worst = worst.max(max_abs_diff(&u.into_inner(), &projected_gradient_box(inst)));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-5 && worst_kkt <= 1e-8 && secs < 60.0,
        format!(
            "200 instances ({with_bounds} with active bounds), max |u - u_pg| = {worst:.2e} (<= 1e-5), \
             max KKT residual = {worst_kkt:.2e} (<= 1e-8), {secs:.2} s (< 60 s)"
        ),
    )
}

fn monotone_fits() -> Outcome {
    let mut r = rng(77);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for k in 0..50 {
        let g = r.random_range(1..=5);
        let n = r.random_range(g.max(5)..=200);
        let problem = random_problem(&mut r, n, g, Tolerances::default());
        match fit_capacitated(&problem, &InitStrategy::seeded(k)) {
            Ok(fit) => {
                for w in fit.objective_trace.windows(2) {
                    worst_rise = worst_rise.max(w[1] - w[0]);
                }
            }
            Err(e) => failures.push(format!("fit {k}: {e}")),
        }
    }
    outcome(
        failures.is_empty() && worst_rise <= 1e-9,
        format!(
            "50 fits, largest J(k+1) - J(k) = {worst_rise:.2e} (<= 1e-9){}",
            if failures.is_empty() { String::new() } else { format!("; errors: {failures:?}") }
        ),
    )
}

fn synthetic_capacities() -> Outcome {
    let start = Instant::now();
    let result = run_synth(&RunConfig::new(DataSource::Synthetic(0), 3));
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(run) => {
            let residual = match run.report.capacity_residual {
                CapacityField::Residual(r) => r,
                CapacityField::NotEnforced => f64::INFINITY,
            };
            outcome(
                run.report.converged && residual <= 1e-6 && secs < 2.0,
                format!(
                    "converged = {} after {} iterations, max relative capacity residual = {residual:.2e} \
                     (<= 1e-6), {secs:.3} s (< 2 s)",
                    run.report.converged, run.report.iterations
                ),
            )
        }
        Err(e) => outcome(false, format!("synthetic run failed: {e}")),
    }
}

fn best_time<F: FnMut()>(reps: usize, mut f: F) -> f64 {
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn scaling() -> Outcome {
    let (n, g) = (2000, 8);
    let mut r = rng(8);
    let q = Array2::from_shape_fn((g, n), |_| r.random_range(0.1..10.0));
    let z: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let total: f64 = z.iter().sum();
    let inst = QpInstance {
        q,
        z,
        mu: vec![total / g as f64; g],
    };
    let q = dist(&inst.q);
    let structured = best_time(5, || {
        capacitated_membership(&q, &inst.z, &inst.mu).unwrap();
    });
    let dense = best_time(3, || {
        dense_reduced_solve(&inst);
    });
    let speedup = dense / structured;
    outcome(
        structured < 0.1 && speedup >= 10.0,
        format!(
            "n = {n}, g = {g}: membership solve {:.2} ms (< 100 ms), dense reduced solve {:.1} ms, \
             speedup {speedup:.0}x (>= 10x)",
            structured * 1e3,
            dense * 1e3
        ),
    )
}

fn wine_fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/wine.data")
}

fn wine_config() -> RunConfig {
    let mut config = RunConfig::new(DataSource::Wine(wine_fixture()), 3);
    config.zscore = true;
    config.restarts = 10;
    config
}

fn row(reports: &[Report], algorithm: Algorithm) -> &Report {
    reports.iter().find(|r| r.algorithm == algorithm.name()).unwrap()
}

fn print_rows(label: &str, reports: &[Report]) {
    println!("    {label}");
    for r in reports {
        let cap = match r.capacity_residual {
            CapacityField::Residual(v) => format!("{v:.2e}"),
            CapacityField::NotEnforced => "not-enforced".into(),
        };
        println!(
            "    {:<13} ARI {:.4}  capacity {:<12}  iterations {:>3}  {:.3} s",
            r.algorithm,
            r.ari.unwrap_or(f64::NAN),
            cap,
            r.iterations,
            r.wall_time_s
        );
    }
}

fn wine() -> Outcome {
    let reports = match run_compare(&wine_config()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("compare failed: {e}")),
    };
    print_rows("z-scored features:", &reports);
    let mut raw = wine_config();
    raw.zscore = false;
    if let Ok(raw_reports) = run_compare(&raw) {
        print_rows("raw features (reported only):", &raw_reports);
    }
    let proposed = row(&reports, Algorithm::Capacitated);
    let fcm = row(&reports, Algorithm::Fcm);
    let ari = proposed.ari.unwrap_or(f64::NAN);
    let residual = match proposed.capacity_residual {
        CapacityField::Residual(v) => v,
        CapacityField::NotEnforced => f64::INFINITY,
    };
    let ordering = if ari >= fcm.ari.unwrap_or(f64::NAN) { "holds" } else { "does not hold" };
    outcome(
        reports.len() == 3
            && (0.30..=0.60).contains(&ari)
            && residual <= 1e-6
            && fcm.capacity_residual == CapacityField::NotEnforced,
        format!(
            "capacitated ARI = {ari:.4} (in [0.30, 0.60]), capacity residual = {residual:.2e} (<= 1e-6), \
             FCM capacity not enforced; ordering capacitated >= FCM {ordering} (reported only)"
        ),
    )
}

fn feasible_init() -> Outcome {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = r.random_range(1..=6);
        let n = r.random_range(g..=60);
        let problem = random_problem(&mut r, n, g, Tolerances::default());
        let u = feasible_init_membership(&problem);
        let mu = problem.capacities();
        let largest = mu.iter().copied().fold(0.0, f64::max);
        worst = worst.max(u.column_sum_residual());
        for (i, &m) in mu.iter().enumerate() {
            let load: f64 = u.values().row(i).iter().zip(problem.weights()).map(|(a, b)| a * b).sum();
            worst = worst.max((load - m).abs() / largest);
        }
    }
    outcome(
        worst <= 1e-12,
        format!("100 specs, worst relative constraint residual = {worst:.2e} (<= 1e-12)"),
    )
}

fn determinism() -> Outcome {
    let mut config = wine_config();
    config.restarts = 3;
    let render = |config: &RunConfig| -> String {
        let reports: Vec<Report> = run_compare(config)
            .unwrap()
            .iter()
            .map(Report::without_timing)
            .collect();
        reports_to_json(&reports).unwrap()
    };
    let first = render(&config);
    let second = render(&config);
    config.concurrent = true;
    let threaded = render(&config);
    outcome(
        first == second && first == threaded,
        format!(
            "two sequential runs identical: {}; concurrent run identical: {} ({} bytes)",
            first == second,
            first == threaded,
            first.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("equality QP matches dense KKT solve", equality_oracle),
        ("box QP matches projected-gradient oracle", box_oracle),
        ("objective never increases", monotone_fits),
        ("synthetic run meets capacities", synthetic_capacities),
        ("structured solve scales", scaling),
        ("Wine comparison", wine),
        ("feasible initializer", feasible_init),
        ("compare is deterministic", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict}  {name}: {}", k + 1, result.detail);
        failed += usize::from(!result.pass);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
