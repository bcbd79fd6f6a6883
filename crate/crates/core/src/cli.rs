//! Command-line front end: argument parsing, experiment drivers and report
//! serialization. The binary in `main.rs` only forwards to [`main_with_args`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::clustering::{
    equibalanced_problem, fit_capacitated, fit_fcm, FitResult, InitStrategy,
};
use crate::data_io::{
    equal_capacities, generate_synthetic, load_csv, load_wine, normalize_zscore, Dataset,
};
use crate::error::{Error, Result};
use crate::metrics::{adjusted_rand_index, capacity_residual, harden, LabelVector};
use crate::model::{validate_problem, MembershipMatrix, ProblemSpec, Tolerances, ValidatedProblem};

/// Relative capacity residual below which a run counts as satisfying its
/// capacities.
pub const CAPACITY_SATISFIED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Capacitated,
    Fcm,
    Equibalanced,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Capacitated => "capacitated",
            Algorithm::Fcm => "fcm",
            Algorithm::Equibalanced => "equibalanced",
        }
    }

    /// Row order of the comparison table.
    pub const ALL: [Algorithm; 3] = [Algorithm::Fcm, Algorithm::Equibalanced, Algorithm::Capacitated];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CapacitySource {
    Equal,
    Explicit(Vec<f64>),
    File(PathBuf),
}

impl std::str::FromStr for CapacitySource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "equal" {
            return Ok(CapacitySource::Equal);
        }
        if let Some(path) = s.strip_prefix('@') {
            return Ok(CapacitySource::File(PathBuf::from(path)));
        }
        parse_number_list(s).map(CapacitySource::Explicit)
    }
}

fn parse_number_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad capacity {t:?}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        weight_column: Option<String>,
        label_column: Option<String>,
    },
    Wine(PathBuf),
    Synthetic(u64),
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub g: usize,
    pub capacities: CapacitySource,
    pub algorithm: Algorithm,
    /// Fuzzifier for the unconstrained baseline.
    pub m: f64,
    pub seed: u64,
    pub restarts: usize,
    pub zscore: bool,
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub concurrent: bool,
}

impl RunConfig {
    pub fn new(data: DataSource, g: usize) -> Self {
        Self {
            data,
            g,
            capacities: CapacitySource::Equal,
            algorithm: Algorithm::Capacitated,
            m: 2.0,
            seed: 0,
            restarts: 1,
            zscore: false,
            tolerances: Tolerances::default(),
            out: None,
            format: OutputFormat::Json,
            concurrent: false,
        }
    }

    fn check(&self) -> Result<()> {
        if self.g == 0 {
            return Err(Error::InvalidParameter("--g must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("--restarts must be at least 1".into()));
        }
        if let CapacitySource::Explicit(mu) = &self.capacities {
            if mu.len() != self.g {
                return Err(Error::InvalidParameter(format!(
                    "{} explicit capacities for g = {}",
                    mu.len(),
                    self.g
                )));
            }
        }
        Ok(())
    }
}

/// Capacity column of a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapacityField {
    Residual(f64),
    NotEnforced,
}

impl Serialize for CapacityField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CapacityField::Residual(r) => s.serialize_f64(*r),
            CapacityField::NotEnforced => s.serialize_str("not-enforced"),
        }
    }
}

/// One algorithm's results.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub algorithm: String,
    pub ari: Option<f64>,
    pub objective: f64,
    pub capacity_residual: CapacityField,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub objective_trace: Vec<f64>,
}

impl Serialize for Report {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Report", 8)?;
        st.serialize_field("algorithm", &self.algorithm)?;
        st.serialize_field("ari", &self.ari)?;
        st.serialize_field("objective", &self.objective)?;
        st.serialize_field("capacity_residual", &self.capacity_residual)?;
        st.serialize_field("iterations", &self.iterations)?;
        st.serialize_field("converged", &self.converged)?;
        st.serialize_field("wall_time_s", &self.wall_time_s)?;
        st.serialize_field("objective_trace", &self.objective_trace)?;
        st.end()
    }
}

impl Report {
    /// Table cell for capacity satisfaction.
    pub fn capacity_satisfaction(&self) -> &'static str {
        match self.capacity_residual {
            CapacityField::NotEnforced => "not-applicable",
            CapacityField::Residual(r) if r <= CAPACITY_SATISFIED_TOL => "satisfied",
            CapacityField::Residual(_) => "violated",
        }
    }

    /// Copy with the wall-time field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Report {
        Report {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

/// A finished fit with everything needed to write outputs.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub fit: FitResult,
    pub labels: LabelVector,
    pub dataset: Dataset,
}

#[derive(serde::Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    report: &'a Report,
    labels: &'a [usize],
    memberships: Vec<Vec<f64>>,
}

pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    let data = match &config.data {
        DataSource::Csv {
            path,
            weight_column,
            label_column,
        } => load_csv(path, weight_column.as_deref(), label_column.as_deref())?,
        DataSource::Wine(path) => load_wine(path)?.dataset,
        DataSource::Synthetic(seed) => generate_synthetic(*seed),
    };
    Ok(if config.zscore {
        normalize_zscore(&data)
    } else {
        data
    })
}

fn resolve_capacities(config: &RunConfig, data: &Dataset) -> Result<Vec<f64>> {
    let mu = match &config.capacities {
        CapacitySource::Equal => equal_capacities(data, config.g),
        CapacitySource::Explicit(mu) => mu.clone(),
        CapacitySource::File(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_number_list(&text).map_err(|message| Error::Parse {
                row: 1,
                column: path.display().to_string(),
                message,
            })?
        }
    };
    if mu.len() != config.g {
        return Err(Error::InvalidParameter(format!(
            "{} capacities for g = {}",
            mu.len(),
            config.g
        )));
    }
    Ok(mu)
}

fn problem_for(algorithm: Algorithm, config: &RunConfig, data: &Dataset) -> Result<ValidatedProblem> {
    match algorithm {
        Algorithm::Equibalanced => {
            equibalanced_problem(data.features.clone(), config.g, config.tolerances)
        }
        Algorithm::Capacitated | Algorithm::Fcm => {
            let mu = resolve_capacities(config, data)?;
            let m = if algorithm == Algorithm::Fcm { config.m } else { 2.0 };
            let spec = ProblemSpec::new(data.features.clone(), data.weights.clone(), mu)
                .with_fuzzifier(m)
                .with_tolerances(config.tolerances);
            validate_problem(&spec)
        }
    }
}

/// Runs one algorithm with `restarts` consecutive seeds and keeps the fit
/// with the lowest final objective (earliest seed on ties). The wall time
/// covers the fit calls only.
pub fn run_algorithm(algorithm: Algorithm, config: &RunConfig, data: &Dataset) -> Result<RunOutcome> {
    config.check()?;
    let problem = problem_for(algorithm, config, data)?;
    let mut best: Option<FitResult> = None;
    let mut elapsed = 0.0;
    for r in 0..config.restarts {
        let init = InitStrategy::seeded(config.seed.wrapping_add(r as u64));
        let start = Instant::now();
        let fit = match algorithm {
            Algorithm::Fcm => fit_fcm(&problem, &init)?,
            Algorithm::Capacitated | Algorithm::Equibalanced => fit_capacitated(&problem, &init)?,
        };
        elapsed += start.elapsed().as_secs_f64();
        if best
            .as_ref()
            .is_none_or(|b| fit.final_objective() < b.final_objective())
        {
            best = Some(fit);
        }
    }
    let fit = best.expect("at least one restart");
    let labels = harden(&fit.memberships);
    let ari = data
        .true_labels
        .as_ref()
        .map(|truth| adjusted_rand_index(truth, &labels))
        .transpose()?;
    let capacity = match algorithm {
        Algorithm::Fcm => CapacityField::NotEnforced,
        _ => CapacityField::Residual(capacity_residual(
            &fit.memberships,
            problem.weights(),
            problem.capacities(),
        )?),
    };
    let report = Report {
        algorithm: algorithm.name().into(),
        ari,
        objective: fit.final_objective(),
        capacity_residual: capacity,
        iterations: fit.iterations,
        converged: fit.converged,
        wall_time_s: elapsed,
        objective_trace: fit.objective_trace.clone(),
    };
    Ok(RunOutcome {
        report,
        fit,
        labels,
        dataset: data.clone(),
    })
}

/// `fit`: one algorithm on one dataset; writes the report, labels and
/// memberships when an output path is configured.
pub fn run_fit(config: &RunConfig) -> Result<RunOutcome> {
    config.check()?;
    let data = load_dataset(config)?;
    let outcome = run_algorithm(config.algorithm, config, &data)?;
    if let Some(out) = &config.out {
        write_fit_output(&outcome, out, config.format)?;
    }
    Ok(outcome)
}

/// `compare`: FCM, equi-balanced and capacitated with the same data and seed.
pub fn run_compare(config: &RunConfig) -> Result<Vec<Report>> {
    config.check()?;
    let data = load_dataset(config)?;
    if data.true_labels.is_none() {
        return Err(Error::InvalidParameter(
            "compare needs ground-truth labels (--labels-column)".into(),
        ));
    }
    let outcomes: Vec<Result<RunOutcome>> = if config.concurrent {
        std::thread::scope(|scope| {
            let handles: Vec<_> = Algorithm::ALL
                .iter()
                .map(|&a| {
                    let data = &data;
                    scope.spawn(move || run_algorithm(a, config, data))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fit thread panicked"))
                .collect()
        })
    } else {
        Algorithm::ALL
            .iter()
            .map(|&a| run_algorithm(a, config, &data))
            .collect()
    };
    let reports = outcomes
        .into_iter()
        .map(|o| o.map(|o| o.report))
        .collect::<Result<Vec<_>>>()?;
    if let Some(out) = &config.out {
        write_reports(&reports, out, config.format)?;
    }
    Ok(reports)
}

/// `synth`: the three-blob dataset, capacitated with `g = 3` and equal
/// capacities. Writes the report and a plot-ready per-point CSV.
pub fn run_synth(config: &RunConfig) -> Result<RunOutcome> {
    let mut config = config.clone();
    config.g = 3;
    config.capacities = CapacitySource::Equal;
    config.algorithm = Algorithm::Capacitated;
    if !matches!(config.data, DataSource::Synthetic(_)) {
        config.data = DataSource::Synthetic(0);
    }
    config.check()?;
    let data = load_dataset(&config)?;
    let outcome = run_algorithm(Algorithm::Capacitated, &config, &data)?;
    if let Some(out) = &config.out {
        write_reports(std::slice::from_ref(&outcome.report), out, config.format)?;
        write_points_csv(&outcome, &points_path(out))?;
    }
    Ok(outcome)
}

/// Sibling path used for per-point output: `run.json` → `run.points.csv`.
pub fn points_path(out: &Path) -> PathBuf {
    out.with_extension("points.csv")
}

pub fn reports_to_json(reports: &[Report]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::Io(e.to_string()))
}

pub fn reports_to_csv(reports: &[Report]) -> String {
    let mut out = String::from(
        "algorithm,ari,objective,capacity_residual,iterations,converged,wall_time_s,objective_trace\n",
    );
    for r in reports {
        let ari = r.ari.map(|a| a.to_string()).unwrap_or_default();
        let cap = match r.capacity_residual {
            CapacityField::Residual(v) => v.to_string(),
            CapacityField::NotEnforced => "not-enforced".into(),
        };
        let trace: Vec<String> = r.objective_trace.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.algorithm,
            ari,
            r.objective,
            cap,
            r.iterations,
            r.converged,
            r.wall_time_s,
            trace.join(";")
        );
    }
    out
}

/// Plain-text comparison table with one row per algorithm.
pub fn comparison_table(reports: &[Report]) -> String {
    let mut out = format!(
        "{:<14} {:>20} {:>22} {:>22}\n",
        "Algorithm", "Adjusted Rand Index", "Capacity Satisfaction", "Computational Time (s)"
    );
    for r in reports {
        let ari = r.ari.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(
            out,
            "{:<14} {:>20} {:>22} {:>22.4}",
            r.algorithm,
            ari,
            r.capacity_satisfaction(),
            r.wall_time_s
        );
    }
    out
}

fn write_reports(reports: &[Report], out: &Path, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Json => reports_to_json(reports)?,
        OutputFormat::Csv => reports_to_csv(reports),
    };
    std::fs::write(out, text)?;
    Ok(())
}

fn write_fit_output(outcome: &RunOutcome, out: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Json => {
            let u = outcome.fit.memberships.values();
            let doc = FitOutput {
                report: &outcome.report,
                labels: outcome.labels.as_slice(),
                memberships: u.outer_iter().map(|r| r.to_vec()).collect(),
            };
            let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(out, text)?;
        }
        OutputFormat::Csv => {
            write_reports(std::slice::from_ref(&outcome.report), out, format)?;
            write_points_csv(outcome, &points_path(out))?;
        }
    }
    Ok(())
}

/// Per-point rows: features, weight, hardened label, then `u_1..u_g`.
pub fn write_points_csv(outcome: &RunOutcome, path: &Path) -> Result<()> {
    std::fs::write(path, points_csv(&outcome.dataset, &outcome.labels, &outcome.fit.memberships))?;
    Ok(())
}

pub fn points_csv(data: &Dataset, labels: &LabelVector, u: &MembershipMatrix) -> String {
    let mut header: Vec<String> = if data.feature_names.len() == data.dim() {
        data.feature_names.clone()
    } else {
        (0..data.dim()).map(|k| format!("x{k}")).collect()
    };
    header.push("weight".into());
    header.push("label".into());
    header.extend((1..=u.n_clusters()).map(|i| format!("u_{i}")));
    let mut out = header.join(",");
    out.push('\n');
    for (j, row) in data.features.outer_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(data.weights[j].to_string());
        fields.push(labels.0[j].to_string());
        fields.extend(u.column(j).iter().map(|v| v.to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(name = "capfuzz", version, about = "Capacity-constrained fuzzy clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one algorithm to a CSV dataset.
    Fit(CommonArgs),
    /// Replay the three-blob synthetic experiment.
    Synth(CommonArgs),
    /// Compare all algorithms on the UCI Wine file.
    Wine(CommonArgs),
    /// Compare all algorithms on a labelled CSV dataset.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Input CSV (or the Wine file for `wine`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generator seed for the synthetic dataset.
    #[arg(long)]
    pub seed_data: Option<u64>,
    #[arg(long)]
    pub g: Option<usize>,
    /// `equal`, a comma-separated list, or `@path`.
    #[arg(long, default_value = "equal")]
    pub capacities: CapacitySource,
    #[arg(long)]
    pub weights_column: Option<String>,
    #[arg(long)]
    pub labels_column: Option<String>,
    #[arg(long, value_enum, default_value = "capacitated")]
    pub algo: Algorithm,
    /// Fuzzifier of the unconstrained FCM baseline.
    #[arg(long, default_value_t = 2.0)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Seeded restarts per algorithm; the lowest objective is kept.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Z-score features before clustering (default on for `wine`).
    #[arg(long)]
    pub zscore: Option<bool>,
    /// Run the compared fits on separate threads.
    #[arg(long)]
    pub concurrent: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

impl Command {
    /// Resolves the arguments into a [`RunConfig`].
    pub fn to_config(&self) -> Result<RunConfig> {
        let (args, is_wine, is_synth) = match self {
            Command::Fit(a) | Command::Compare(a) => (a, false, false),
            Command::Wine(a) => (a, true, false),
            Command::Synth(a) => (a, false, true),
        };
        let data = if is_synth {
            if args.data.is_some() {
                return Err(Error::InvalidParameter("synth takes --seed-data, not --data".into()));
            }
            DataSource::Synthetic(args.seed_data.unwrap_or(0))
        } else {
            match (&args.data, args.seed_data) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidParameter(
                        "give exactly one of --data and --seed-data".into(),
                    ))
                }
                (None, Some(seed)) => DataSource::Synthetic(seed),
                (Some(path), None) if is_wine => DataSource::Wine(path.clone()),
                (Some(path), None) => DataSource::Csv {
                    path: path.clone(),
                    weight_column: args.weights_column.clone(),
                    label_column: args.labels_column.clone(),
                },
                (None, None) => {
                    return Err(Error::InvalidParameter("missing --data".into()));
                }
            }
        };
        let g = match (args.g, is_wine || is_synth) {
            (Some(g), _) => g,
            (None, true) => 3,
            (None, false) => return Err(Error::InvalidParameter("missing --g".into())),
        };
        let mut tolerances = Tolerances::default();
        if let Some(tol) = args.tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidParameter("--tol must be positive".into()));
            }
            tolerances.convergence_tol = tol;
        }
        if let Some(max_iter) = args.max_iter {
            tolerances.max_iterations = max_iter;
        }
        Ok(RunConfig {
            data,
            g,
            capacities: args.capacities.clone(),
            algorithm: args.algo,
            m: args.m,
            seed: args.seed,
            restarts: args.restarts.unwrap_or(if is_wine { 10 } else { 1 }),
            zscore: args.zscore.unwrap_or(is_wine),
            tolerances,
            out: args.out.clone(),
            format: args.format,
            concurrent: args.concurrent,
        })
    }
}

/// Exit status for an error: 3 for numerical failures, 2 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Single-line machine-parsable rendering of an error.
pub fn error_line(err: &Error) -> String {
    format!("error kind={} message={:?}", err.kind(), err.to_string())
}

fn execute(command: &Command) -> Result<String> {
    let config = command.to_config()?;
    match command {
        Command::Fit(_) => {
            let outcome = run_fit(&config)?;
            reports_to_json(std::slice::from_ref(&outcome.report))
        }
        Command::Synth(_) => {
            let outcome = run_synth(&config)?;
            reports_to_json(std::slice::from_ref(&outcome.report))
        }
        Command::Wine(_) | Command::Compare(_) => {
            let reports = run_compare(&config)?;
            Ok(comparison_table(&reports))
        }
    }
}

/// Runs the CLI on explicit arguments and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("error kind=Usage message={:?}", e.to_string().lines().next().unwrap_or(""));
            return 2;
        }
    };
    match execute(&cli.command) {
        Ok(text) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            0
        }
        Err(err) => {
            eprintln!("{}", error_line(&err));
            exit_code(&err)
        }
    }
}
