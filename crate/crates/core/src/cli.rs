//! `obsell` command-line front end.
//!
//! Exit codes: 0 success, 2 input or usage error, 3 observability
//! requirement failed, 4 theoretical assumption violated.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

use crate::analytic::{analytic_volumes, shape_factors, AnalyticVolumes, ShapeFactorReport};
use crate::bench::{run_containment_experiment, BenchConfig, SamplingMode};
use crate::compare::{metric_report, rank_candidates, Ranking, RankingPolicy};
use crate::duality::{verify_duality, DEFAULT_TOLERANCE};
use crate::ellipsoid::{
    error_ellipsoid_metrics, image_ellipsoid_metrics, min_samples_for_error, sweep_directions,
    Ellipsoid, EllipsoidMetrics, DEFAULT_SWEEP,
};
use crate::error::Error;
use crate::gramian::{observability_bundle, Horizon};
use crate::model::{
    matrix_to_rows, normalize_rated, normalize_shared, parse_model_unchecked, validate_system,
    LdtSystem, NormalizationSpec, OutputDirection, ValidationReport,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_STEPS: usize = 16;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNOBSERVABLE: i32 = 3;
pub const EXIT_ASSUMPTION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "obsell", version, about = "Observe-ability ellipsoids of linear discrete-time systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Horizon N (number of output samples).
    #[arg(long, global = true, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,

    /// Use the infinite horizon instead of --steps.
    #[arg(long, global = true)]
    pub infinite: bool,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeMode {
    /// Shared ranges if present, else rated values if present, else none.
    Auto,
    None,
    Rated,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    DivideOutput,
    PaperLiteral,
}

impl From<Direction> for OutputDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::DivideOutput => OutputDirection::DivideOutput,
            Direction::PaperLiteral => OutputDirection::PaperLiteral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sampling {
    Boundary,
    Interior,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model document.
    Validate { model: PathBuf },
    /// Gramian summary, error and image ellipsoid metrics, verdict.
    Analyze {
        model: PathBuf,
        /// Exit 3 when the model is not observable at the horizon.
        #[arg(long)]
        require_observable: bool,
        /// Add the closed-form infinite-horizon determinant and volumes.
        #[arg(long)]
        analytic: bool,
    },
    /// Eigenstructure and shape factors (single-output models).
    Factors { model: PathBuf },
    /// Observability/reachability duality residuals.
    Dual {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Boundary points of the error and image ellipsoids of a 2-D model.
    Boundary {
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SWEEP)]
        samples: usize,
    },
    /// Monte-Carlo containment experiment for the least-squares observer.
    Bench {
        model: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Sampling::Boundary)]
        sampling: Sampling,
        /// Energy bound s of the noise sequence.
        #[arg(long, default_value_t = 1.0)]
        noise_bound: f64,
        /// Include per-trial records.
        #[arg(long)]
        records: bool,
    },
    /// Normalize and rank candidate models.
    Compare {
        #[arg(required = true, num_args = 1..)]
        models: Vec<PathBuf>,
        /// JSON ranking policy (mode, floors, weights).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = NormalizeMode::Auto)]
        normalize: NormalizeMode,
        #[arg(long, value_enum, default_value_t = Direction::DivideOutput)]
        direction: Direction,
        /// Skip shape factors.
        #[arg(long)]
        no_analytic: bool,
    },
    /// Fewest samples whose error set excludes a target error.
    Minsamples {
        model: PathBuf,
        /// Comma-separated target error vector.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        target: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
    },
}

/// Result of one invocation; the binary forwards it to the process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_assumption_violation() => EXIT_ASSUMPTION,
            Error::RankDeficient { .. } | Error::UnboundedDirection => EXIT_UNOBSERVABLE,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses arguments (including the program name) and runs.
pub fn run_from_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            }
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let mut warnings = Vec::new();
    let result = dispatch(cli, &mut warnings);
    let mut stderr: String = warnings.iter().map(|w| format!("warning: {w}\n")).collect();
    let (code, body) = match result {
        Ok((code, body)) => (code, body),
        Err(f) => {
            stderr.push_str(&format!("error: {}\n", f.message));
            return Outcome { code: f.code, stdout: String::new(), stderr };
        }
    };
    let stdout = match &cli.output {
        Some(path) => match std::fs::write(path, &body) {
            Ok(()) => String::new(),
            Err(e) => {
                stderr.push_str(&format!("error: cannot write {}: {e}\n", path.display()));
                return Outcome { code: EXIT_INPUT, stdout: String::new(), stderr };
            }
        },
        None => body,
    };
    Outcome { code, stdout, stderr }
}

fn horizon(cli: &Cli) -> Result<Horizon, Failure> {
    if cli.infinite {
        return Ok(Horizon::Infinite);
    }
    if cli.steps == 0 {
        return Err(Failure::input("--steps must be at least 1"));
    }
    Ok(Horizon::Finite(cli.steps))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn load_unchecked(path: &Path, warnings: &mut Vec<String>) -> Result<LdtSystem, Failure> {
    let loaded = parse_model_unchecked(&read_text(path)?)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    if !loaded.ignored_keys.is_empty() {
        warnings.push(format!(
            "{}: ignoring unknown keys: {}",
            path.display(),
            loaded.ignored_keys.join(", ")
        ));
    }
    Ok(loaded.system)
}

fn load(path: &Path, warnings: &mut Vec<String>) -> Result<LdtSystem, Failure> {
    let sys = load_unchecked(path, warnings)?;
    sys.check()
        .map_err(|e| Failure::input(format!("{}: invalid model: {e}", path.display())))?;
    Ok(sys)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

fn render<T: Serialize>(cli: &Cli, command: &str, body: T) -> Result<String, Failure> {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        body,
    };
    let value = serde_json::to_value(&envelope).map_err(|e| Failure::input(e.to_string()))?;
    match cli.format {
        Format::Json => Ok(serde_json::to_string_pretty(&value).expect("JSON values serialize") + "\n"),
        Format::Csv => key_value_csv(&value),
    }
}

/// Formats with 9 significant digits and no locale-specific separators.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if mag != 0.0 && !(1e-6..1e16).contains(&mag) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&join(k), v, out)),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&join(&i.to_string()), v, out)),
        Value::Number(n) if n.is_f64() => out.push((prefix.into(), format_sig9(n.as_f64().unwrap_or(f64::NAN)))),
        Value::Number(n) => out.push((prefix.into(), n.to_string())),
        Value::String(s) => out.push((prefix.into(), s.clone())),
        Value::Bool(b) => out.push((prefix.into(), b.to_string())),
        Value::Null => out.push((prefix.into(), String::new())),
    }
}

fn key_value_csv(value: &Value) -> Result<String, Failure> {
    let mut rows = Vec::new();
    flatten("", value, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::input(e.to_string());
    w.write_record(["key", "value"]).map_err(io)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(io)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, Failure> {
    let bytes = w.into_inner().map_err(|e| Failure::input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::input(e.to_string()))
}

fn dispatch(cli: &Cli, warnings: &mut Vec<String>) -> Result<(i32, String), Failure> {
    match &cli.command {
        Command::Validate { model } => cmd_validate(cli, model, warnings),
        Command::Analyze { model, require_observable, analytic } => {
            cmd_analyze(cli, model, *require_observable, *analytic, warnings)
        }
        Command::Factors { model } => {
            let sys = load(model, warnings)?;
            let report = shape_factors(&sys)?;
            Ok((EXIT_OK, render(cli, "factors", FactorsBody { model: &sys.name, factors: report })?))
        }
        Command::Dual { model, tolerance } => {
            let sys = load(model, warnings)?;
            let report = verify_duality(&sys, horizon(cli)?, *tolerance)?;
            Ok((EXIT_OK, render(cli, "dual", DualBody { model: &sys.name, duality: report })?))
        }
        Command::Boundary { model, samples } => cmd_boundary(cli, model, *samples, warnings),
        Command::Bench { model, trials, seed, sampling, noise_bound, records } => {
            if *trials == 0 {
                return Err(Failure::input("--trials must be at least 1"));
            }
            let Horizon::Finite(steps) = horizon(cli)? else {
                return Err(Failure::input("bench needs a finite --steps horizon"));
            };
            let sys = load(model, warnings)?;
            let mut cfg = BenchConfig::new(*trials, *seed, steps);
            cfg.noise.bound = *noise_bound;
            cfg.keep_records = *records;
            cfg.sampling = match sampling {
                Sampling::Boundary => SamplingMode::Boundary,
                Sampling::Interior => SamplingMode::Interior,
            };
            let result = run_containment_experiment(&sys, &cfg)?;
            Ok((EXIT_OK, render(cli, "bench", BenchBody { model: &sys.name, bench: result })?))
        }
        Command::Compare { models, policy, normalize, direction, no_analytic } => {
            cmd_compare(cli, models, policy.as_deref(), *normalize, (*direction).into(), !no_analytic, warnings)
        }
        Command::Minsamples { model, target, max_steps } => {
            let sys = load(model, warnings)?;
            let found = min_samples_for_error(&sys, &DVector::from_column_slice(target), *max_steps)?;
            let body = MinSamplesBody {
                model: &sys.name,
                target: target.clone(),
                max_steps: *max_steps,
                min_steps: found,
            };
            Ok((EXIT_OK, render(cli, "minsamples", body)?))
        }
    }
}

#[derive(Serialize)]
struct ValidateBody<'a> {
    model: &'a str,
    ignored_keys: Vec<String>,
    #[serde(flatten)]
    report: ValidationReport,
}

fn cmd_validate(cli: &Cli, model: &Path, warnings: &mut Vec<String>) -> Result<(i32, String), Failure> {
    let loaded = parse_model_unchecked(&read_text(model)?)
        .map_err(|e| Failure::input(format!("{}: {e}", model.display())))?;
    if !loaded.ignored_keys.is_empty() {
        warnings.push(format!(
            "{}: ignoring unknown keys: {}",
            model.display(),
            loaded.ignored_keys.join(", ")
        ));
    }
    let report = validate_system(&loaded.system);
    let code = if report.valid { EXIT_OK } else { EXIT_INPUT };
    let body = ValidateBody {
        model: &loaded.system.name,
        ignored_keys: loaded.ignored_keys,
        report,
    };
    Ok((code, render(cli, "validate", body)?))
}

#[derive(Serialize)]
struct AnalyticSection {
    #[serde(flatten)]
    volumes: Option<AnalyticVolumes>,
    note: Option<String>,
}

#[derive(Serialize)]
struct AnalyzeBody<'a> {
    model: &'a str,
    n: usize,
    m: usize,
    horizon: Horizon,
    rank: usize,
    observable: bool,
    verdict: &'static str,
    gramian: Vec<Vec<f64>>,
    determinant: f64,
    min_eig: f64,
    max_eig: f64,
    error_ellipsoid: EllipsoidMetrics,
    image_ellipsoid: EllipsoidMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticSection>,
}

fn cmd_analyze(
    cli: &Cli,
    model: &Path,
    require_observable: bool,
    analytic: bool,
    warnings: &mut Vec<String>,
) -> Result<(i32, String), Failure> {
    let sys = load(model, warnings)?;
    let h = horizon(cli)?;
    let bundle = observability_bundle(&sys, h)?;
    let error_ellipsoid = error_ellipsoid_metrics(&bundle)?;
    let image_ellipsoid = image_ellipsoid_metrics(&bundle)?;
    let observable = bundle.is_full_rank() && error_ellipsoid.is_bounded();

    let analytic = if analytic {
        match analytic_volumes(&sys) {
            Ok(v) => Some(AnalyticSection { volumes: Some(v), note: None }),
            Err(e) if cli.infinite && e.is_assumption_violation() => {
                return Err(Failure {
                    code: EXIT_ASSUMPTION,
                    message: format!("analytic assumptions violated: {e}"),
                })
            }
            Err(e) => Some(AnalyticSection { volumes: None, note: Some(e.to_string()) }),
        }
    } else {
        None
    };

    let body = AnalyzeBody {
        model: &sys.name,
        n: sys.n(),
        m: sys.m(),
        horizon: h,
        rank: bundle.rank,
        observable,
        verdict: if observable { "observable" } else { "unobservable" },
        gramian: matrix_to_rows(&bundle.g),
        determinant: bundle.determinant,
        min_eig: bundle.min_eig,
        max_eig: bundle.max_eig,
        error_ellipsoid,
        image_ellipsoid,
        analytic,
    };
    let text = render(cli, "analyze", body)?;
    if require_observable && !observable {
        warnings.push(format!("{} is not observable at horizon {h}", sys.name));
        return Ok((EXIT_UNOBSERVABLE, text));
    }
    Ok((EXIT_OK, text))
}

#[derive(Serialize)]
struct FactorsBody<'a> {
    model: &'a str,
    factors: ShapeFactorReport,
}

#[derive(Serialize)]
struct DualBody<'a> {
    model: &'a str,
    duality: crate::duality::DualityReport,
}

#[derive(Serialize)]
struct BenchBody<'a> {
    model: &'a str,
    bench: crate::bench::BenchResult,
}

#[derive(Serialize)]
struct MinSamplesBody<'a> {
    model: &'a str,
    target: Vec<f64>,
    max_steps: usize,
    min_steps: Option<usize>,
}

#[derive(Serialize)]
struct BoundaryBody<'a> {
    model: &'a str,
    horizon: Horizon,
    angles: Vec<f64>,
    error_set: Vec<[f64; 2]>,
    image_set: Vec<[f64; 2]>,
}

fn cmd_boundary(cli: &Cli, model: &Path, samples: usize, warnings: &mut Vec<String>) -> Result<(i32, String), Failure> {
    let sys = load(model, warnings)?;
    if sys.n() != 2 {
        return Err(Failure::input(format!("boundary export needs a 2-state model, got n = {}", sys.n())));
    }
    if samples == 0 {
        return Err(Failure::input("--samples must be at least 1"));
    }
    let h = horizon(cli)?;
    let bundle = observability_bundle(&sys, h)?;
    let directions = sweep_directions(samples);
    let error_pts = Ellipsoid::error_set(&bundle).boundary_points(&directions)?;
    let image_pts = Ellipsoid::image_set(&bundle).boundary_points(&directions)?;
    let angles: Vec<f64> = directions.iter().map(|d| d[1].atan2(d[0])).collect();

    match cli.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Failure::input(e.to_string());
            w.write_record(["angle", "x1", "x2", "z1", "z2"]).map_err(io)?;
            for ((t, e), z) in angles.iter().zip(&error_pts).zip(&image_pts) {
                w.write_record([t, &e[0], &e[1], &z[0], &z[1]].map(|v| format_sig9(*v)))
                    .map_err(io)?;
            }
            Ok((EXIT_OK, finish_csv(w)?))
        }
        Format::Json => {
            let body = BoundaryBody {
                model: &sys.name,
                horizon: h,
                angles,
                error_set: error_pts.iter().map(|p| [p[0], p[1]]).collect(),
                image_set: image_pts.iter().map(|p| [p[0], p[1]]).collect(),
            };
            Ok((EXIT_OK, render(cli, "boundary", body)?))
        }
    }
}

fn normalized(sys: &LdtSystem, mode: NormalizeMode, direction: OutputDirection) -> crate::Result<LdtSystem> {
    let has_rated = sys.rated_states.is_some() || sys.rated_outputs.is_some();
    match mode {
        NormalizeMode::None => Ok(sys.clone()),
        NormalizeMode::Shared => normalize_shared(sys, &NormalizationSpec::shared(sys, direction)),
        NormalizeMode::Rated => normalize_rated(sys, &NormalizationSpec::rated(sys, direction)),
        NormalizeMode::Auto if sys.shared_ranges.is_some() => {
            normalize_shared(sys, &NormalizationSpec::shared(sys, direction))
        }
        NormalizeMode::Auto if has_rated => normalize_rated(sys, &NormalizationSpec::rated(sys, direction)),
        NormalizeMode::Auto => Ok(sys.clone()),
    }
}

#[derive(Serialize)]
struct CompareBody {
    candidates: usize,
    ranking: Ranking,
}

fn cmd_compare(
    cli: &Cli,
    models: &[PathBuf],
    policy: Option<&Path>,
    mode: NormalizeMode,
    direction: OutputDirection,
    analytic: bool,
    warnings: &mut Vec<String>,
) -> Result<(i32, String), Failure> {
    let policy: RankingPolicy = match policy {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Failure::input(format!("{}: bad policy: {e}", p.display())))?,
        None => RankingPolicy::default(),
    };
    let h = horizon(cli)?;
    let mut rows = Vec::with_capacity(models.len());
    for path in models {
        let sys = normalized(&load(path, warnings)?, mode, direction)?;
        rows.push(metric_report(&sys, h, analytic)?);
    }
    let ranking = rank_candidates(&rows, &policy)?;
    if let Some(notice) = &ranking.empty_notice {
        warnings.push(notice.clone());
    }
    let text = match cli.format {
        Format::Json => render(cli, "compare", CompareBody { candidates: rows.len(), ranking })?,
        Format::Csv => ranking_csv(&ranking)?,
    };
    Ok((EXIT_OK, text))
}

fn ranking_csv(ranking: &Ranking) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::input(e.to_string());
    w.write_record([
        "position", "candidate", "score", "vol_error", "vol_image", "r_min", "r_max", "det_g", "f1", "violations",
    ])
    .map_err(io)?;
    let opt = |v: Option<f64>| v.map(format_sig9).unwrap_or_default();
    for r in &ranking.ordered {
        let row = &r.row;
        w.write_record([
            r.position.to_string(),
            row.candidate.clone(),
            format_sig9(r.score),
            format_sig9(row.vol_error),
            format_sig9(row.vol_image),
            format_sig9(row.r_min),
            format_sig9(row.r_max),
            format_sig9(row.det_g),
            opt(row.f1),
            String::new(),
        ])
        .map_err(io)?;
    }
    for row in &ranking.excluded {
        w.write_record([
            String::new(),
            row.candidate.clone(),
            String::new(),
            format_sig9(row.vol_error),
            format_sig9(row.vol_image),
            format_sig9(row.r_min),
            format_sig9(row.r_max),
            format_sig9(row.det_g),
            opt(row.f1),
            row.constraint_violations.join("; "),
        ])
        .map_err(io)?;
    }
    finish_csv(w)
}
