//! Command-line front end for `knet`: fit, eval, check, bench, describe.
//!
//! Every command returns a JSON report carrying [`SCHEMA_VERSION`]. Exit
//! codes: 0 success, 1 I/O, 2 input, 3 separation failure, 4 internal.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use knet::hash::{check_ranges, random_points, separation_trials, HashError};
use knet::inner::verify_inner;
use knet::network::{self, describe, eval_batch, to_dot, ModelMeta, NetworkError};
use knet::outer::{
    fit_exact, fit_iterative, merge_report, FitError, FitMode, FitReport, IterativeConfig,
};
use knet::{ExactRational, HashParams, InnerSpec, KNetModel, OuterFunction, Point, SampleSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

pub mod csvio;
pub mod targets;

pub use targets::Target;

type Oracle = Box<dyn Fn(&Point) -> Option<ExactRational> + Sync>;

/// Version of every JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("input error: {0}")]
    Input(String),
    #[error("separation failure at depth {depth}: closed path mu = ({mu}) on rows {rows}")]
    Separation {
        mu: String,
        rows: String,
        depth: usize,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Input(_) => 2,
            CliError::Separation { .. } => 3,
            CliError::Internal(_) => 4,
        }
    }
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::SeparationFailure { mu, support, depth } => CliError::Separation {
                mu: join(support.iter().map(|&j| &mu[j])),
                rows: join(support.iter().map(|j| j + 1)),
                depth,
            },
            FitError::DuplicatePoint { first, second } => CliError::Input(format!(
                "rows {} and {} hold the same point",
                first + 1,
                second + 1
            )),
            FitError::Diverged { .. } | FitError::Outer(_) => CliError::Internal(e.to_string()),
            FitError::Hash(h) => h.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<HashError> for CliError {
    fn from(e: HashError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::BatchPoint { index, source } => {
                CliError::Input(format!("row {}: {source}", index + 1))
            }
            NetworkError::Outer(_) | NetworkError::Assembly { .. } => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

fn parse_rational(s: &str) -> Result<ExactRational, String> {
    s.parse()
        .map_err(|e: knet::rationals::RationalError| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "knet",
    version,
    about = "Exact Kolmogorov superposition networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit g to samples (exact) or to a target on a grid (iterative) and save the model.
    Fit(FitArgs),
    /// Evaluate a saved model at the points of a CSV file.
    Eval(EvalArgs),
    /// Run the inner-function, range and separation checks.
    Check(CheckArgs),
    /// Sweep sample counts and grid levels; emit timing and size statistics.
    Bench(BenchArgs),
    /// Print layer widths, constants and knot counts of a saved model.
    Describe(DescribeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Input dimension.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Digit base of the inner function; must be at least 2d + 2.
    #[arg(long, default_value_t = 6)]
    pub gamma: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Numeric {
    Exact,
    Fast,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Digit depth k of the inner function.
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    /// Grid level of iterative mode (grid spacing γ^-level).
    #[arg(long, default_value_t = 1)]
    pub grid_level: usize,
    #[arg(long, value_parser = parse_rational, default_value = "1e-9")]
    pub tolerance: ExactRational,
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
    #[arg(long, value_parser = parse_rational, default_value = "1/2")]
    pub damping: ExactRational,
    /// Skip the final exact solve of iterative mode.
    #[arg(long)]
    pub no_finalize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample CSV: d coordinate columns then the target value.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Built-in target used when no sample file is given.
    #[arg(long, value_enum)]
    pub target: Option<Target>,
    /// Number of random sample points drawn for --target in exact mode.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Record a creation time in the model and wall-clock timing in the report.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Point CSV with d coordinate columns.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Digit depth; defaults to the depth stored in the model.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum, default_value_t = Numeric::Exact)]
    pub numeric: Numeric,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
    /// Random points for the inner-function property checks.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Points per separation trial.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Lattice level of the range sweep.
    #[arg(long, default_value_t = 2)]
    pub grid_level: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated inner weights w_0..w_{γ-1} replacing the default.
    #[arg(long, value_delimiter = ',', value_parser = parse_rational)]
    pub weights: Option<Vec<ExactRational>>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
    /// Sample counts of the exact-fit sweep.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub sizes: Vec<usize>,
    /// Grid levels of the iterative sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub grid_levels: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = Target::Product)]
    pub target: Target,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV file for plotting; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DescribeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Emit a Graphviz graph instead of the JSON report.
    #[arg(long)]
    pub dot: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty(report: &Value) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("json value serializes");
    text.push('\n');
    text
}

/// Writes `text` to `path`, or hands it back for stdout.
fn emit(text: String, path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(p) => write_file(p, &text).map(|_| String::new()),
        None => Ok(text),
    }
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn setup(net: &NetArgs) -> Result<(HashParams, InnerSpec), CliError> {
    let params = HashParams::new(net.d, net.gamma)?;
    let inner = InnerSpec::default_for(net.gamma).map_err(|e| CliError::Input(e.to_string()))?;
    Ok((params, inner))
}

pub fn load_model(path: &Path) -> Result<KNetModel, CliError> {
    let text = read_file(path)?;
    network::load(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_points(path: &Path, d: usize) -> Result<Vec<Point>, CliError> {
    Ok(csvio::read_rows(path, d)?
        .into_iter()
        .map(Point::new)
        .collect())
}

fn read_samples(path: &Path, d: usize) -> Result<SampleSet, CliError> {
    let rows = csvio::read_rows(path, d + 1)?;
    let (points, targets) = rows
        .into_iter()
        .map(|mut row| {
            let f = row.pop().expect("d + 1 columns");
            (Point::new(row), f)
        })
        .unzip();
    Ok(SampleSet::new(points, targets)?)
}

fn unix_time() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

/// Exact and fast residuals of the assembled model at the fitted points, and
/// whether the exact residual vanishes.
fn verify_model(
    model: &KNetModel,
    samples: &SampleSet,
    depth: usize,
) -> Result<(Value, bool), CliError> {
    let exact = eval_batch(model, samples.points(), depth)?;
    let residual = exact
        .iter()
        .zip(samples.targets())
        .map(|(e, f)| (&e.value - f).abs())
        .max()
        .unwrap_or_default();
    let fast = model.fast();
    let mut fast_residual = 0.0f64;
    let mut fast_bound = 0.0f64;
    for (x, f) in samples.points().iter().zip(samples.targets()) {
        let w = fast.eval(&x.to_f64(), depth)?;
        fast_residual = fast_residual.max((w.value - f.to_f64()).abs());
        fast_bound = fast_bound.max(w.error_bound);
    }
    let exact_zero = residual.is_zero();
    let report = json!({
        "points": samples.len(),
        "exact": { "numeric": "exact", "residual_max": residual },
        "fast": {
            "numeric": "fast",
            "residual_max": fast_residual,
            "error_bound_max": fast_bound,
        },
    });
    Ok((report, exact_zero))
}

fn fit_config(args: &FitArgs) -> Value {
    json!({
        "d": args.net.d,
        "gamma": args.net.gamma,
        "depth": args.depth,
        "mode": match args.mode { Mode::Exact => "exact", Mode::Iterative => "iterative" },
        "grid_level": args.grid_level,
        "tolerance": args.tolerance,
        "max_iter": args.max_iter,
        "damping": args.damping,
        "finalize": !args.no_finalize,
        "seed": args.seed,
        "target": args.target.map(|t| format!("{t:?}").to_lowercase()),
        "input": args.input.as_ref().map(|p| p.display().to_string()),
    })
}

/// Runs the fit and writes the model file; returns the report. On a
/// separation failure the report (with the closed-path witness) is still
/// written before the error is returned.
pub fn cmd_fit(args: &FitArgs) -> Result<Value, CliError> {
    let started = Instant::now();
    let (params, inner) = setup(&args.net)?;
    let d = params.d();

    let fitted: Result<(OuterFunction, FitReport, SampleSet), CliError> = match args.mode {
        Mode::Exact => {
            let samples = match (&args.input, args.target) {
                (Some(path), _) => read_samples(path, d)?,
                (None, Some(target)) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
                    let points = random_points(d, args.n, &mut rng);
                    SampleSet::from_fn(points, |x| target.eval(x))?
                }
                (None, None) => {
                    return Err(CliError::Input("exact mode needs --in or --target".into()))
                }
            };
            match fit_exact(&samples, &params, &inner, args.depth) {
                Ok((outer, report)) => Ok((outer, report, samples)),
                Err(e) => Err(e.into()),
            }
        }
        Mode::Iterative => {
            let oracle: Oracle = match (&args.input, args.target) {
                (_, Some(target)) => Box::new(move |x: &Point| Some(target.eval(x))),
                (Some(path), None) => {
                    let given = read_samples(path, d)?;
                    let table: HashMap<Point, ExactRational> = given
                        .points()
                        .iter()
                        .cloned()
                        .zip(given.targets().iter().cloned())
                        .collect();
                    Box::new(move |x: &Point| table.get(x).cloned())
                }
                (None, None) => {
                    return Err(CliError::Input(
                        "iterative mode needs --target or a sample file covering the grid".into(),
                    ))
                }
            };
            let config = IterativeConfig {
                grid_level: args.grid_level,
                depth: args.depth,
                max_iter: args.max_iter,
                tolerance: args.tolerance.clone(),
                damping: args.damping.clone(),
                finalize: !args.no_finalize,
            };
            match fit_iterative(&*oracle, &params, &inner, &config) {
                Ok((outer, report)) => {
                    let grid = knet::outer::cube_grid(d, params.gamma(), args.grid_level)?;
                    let samples = SampleSet::from_fn(grid, |x| oracle(x).expect("checked by fit"))?;
                    Ok((outer, report, samples))
                }
                Err(e) => Err(e.into()),
            }
        }
    };

    let (outer, report, samples) = match fitted {
        Ok(f) => f,
        Err(e @ CliError::Separation { .. }) => {
            let failure = json!({
                "schema_version": SCHEMA_VERSION,
                "command": "fit",
                "config": fit_config(args),
                "passed": false,
                "error": e.to_string(),
            });
            if let Some(path) = &args.report {
                write_file(path, &pretty(&failure))?;
            }
            return Err(e);
        }
        Err(e) => return Err(e),
    };

    let meta = ModelMeta {
        fit_mode: Some(report.mode),
        depth: Some(report.depth),
        sample_hash: Some(samples.content_hash()),
        n_samples: Some(samples.len()),
        created: args.timestamp.then(unix_time),
    };
    let model = KNetModel::new(inner, params, outer, meta)?;
    write_file(&args.out, &network::save(&model))?;

    let (verification, exact_zero) = verify_model(&model, &samples, report.depth)?;
    let passed = exact_zero || (report.mode == FitMode::Iterative && !report.finalized);
    let mut out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "config": fit_config(args),
        "model": args.out.display().to_string(),
        "fit": to_value(&report),
        "numeric": "exact",
        "verification": verification,
        "class_report": to_value(&merge_report(model.outer())),
        "passed": passed,
    });
    if args.timestamp {
        out["timing_ms"] = json!(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(out)
}

/// Evaluates the model at every row of the point file; returns CSV text with
/// columns `w,error_bound`.
pub fn cmd_eval(args: &EvalArgs) -> Result<String, CliError> {
    let model = load_model(&args.model)?;
    let params = model.params();
    let points = read_points(&args.input, params.d())?;
    for (i, x) in points.iter().enumerate() {
        params
            .check_point(x)
            .map_err(|e| CliError::Input(format!("row {}: {e}", i + 1)))?;
    }
    let depth = args.depth.or(model.meta().depth).unwrap_or(30);
    let rows: Vec<Vec<String>> = match args.numeric {
        Numeric::Exact => eval_batch(&model, &points, depth)?
            .into_iter()
            .map(|e| {
                vec![
                    e.value.to_fraction_string(),
                    e.error_bound.to_fraction_string(),
                ]
            })
            .collect(),
        Numeric::Fast => {
            let coords: Vec<Vec<f64>> = points.iter().map(Point::to_f64).collect();
            model
                .fast()
                .eval_batch(&coords, depth)?
                .into_iter()
                .map(|e| vec![e.value.to_string(), e.error_bound.to_string()])
                .collect()
        }
    };
    Ok(csvio::render(&["w", "error_bound"], &rows))
}

pub fn cmd_check(args: &CheckArgs) -> Result<Value, CliError> {
    let params = HashParams::new(args.net.d, args.net.gamma)?;
    let inner = match &args.weights {
        Some(w) => InnerSpec::new(args.net.gamma, w.clone()),
        None => InnerSpec::default_for(args.net.gamma),
    }
    .map_err(|e| CliError::Input(format!("inner weights rejected: {e}")))?;

    let properties = verify_inner(&inner, args.samples, args.depth, args.seed)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let ranges = check_ranges(&params, &inner, args.grid_level, args.depth)?;
    let trials = separation_trials(
        &params,
        &inner,
        args.trials,
        args.points,
        args.depth,
        args.seed,
    )?;
    let lambda: Vec<Value> = params
        .lambda()
        .iter()
        .zip(params.lambda_tail())
        .zip(params.lambda_terms())
        .enumerate()
        .map(|(i, ((v, t), n))| json!({ "p": i + 1, "value": v, "tail_bound": t, "terms": n }))
        .collect();
    let passed = properties.passed() && ranges.passed && trials.failures == 0;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": "check",
        "numeric": "exact",
        "config": {
            "d": args.net.d,
            "gamma": args.net.gamma,
            "depth": args.depth,
            "samples": args.samples,
            "trials": args.trials,
            "points": args.points,
            "grid_level": args.grid_level,
            "seed": args.seed,
        },
        "constants": { "a": params.a(), "lambda": lambda, "b": params.b() },
        "inner": to_value(&properties),
        "ranges": to_value(&ranges),
        "separation": to_value(&trials),
        "passed": passed,
    }))
}

pub const BENCH_COLUMNS: [&str; 11] = [
    "run",
    "n",
    "depth",
    "grid_level",
    "knots",
    "fit_ms",
    "separation_depth",
    "retries",
    "iterations",
    "convergence_factor",
    "residual_max",
];

/// Returns the report and the plot CSV.
pub fn cmd_bench(args: &BenchArgs) -> Result<(Value, String), CliError> {
    let (params, inner) = setup(&args.net)?;
    let largest = args.sizes.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let pool = random_points(params.d(), largest, &mut rng);
    let mut rows = Vec::new();
    let mut knot_counts = Vec::new();

    for &n in &args.sizes {
        let samples = SampleSet::from_fn(pool[..n].to_vec(), |x| args.target.eval(x))?;
        let started = Instant::now();
        let (_, report) = fit_exact(&samples, &params, &inner, args.depth)?;
        let ms = started.elapsed().as_secs_f64() * 1e3;
        knot_counts.push(report.knot_count);
        rows.push(vec![
            "exact".to_string(),
            n.to_string(),
            args.depth.to_string(),
            String::new(),
            report.knot_count.to_string(),
            format!("{ms:.3}"),
            report.depth.to_string(),
            (report.depths_tried.len() - 1).to_string(),
            String::new(),
            String::new(),
            report.residual_max.to_f64().to_string(),
        ]);
    }

    for &level in &args.grid_levels {
        let config = IterativeConfig {
            grid_level: level,
            depth: args.depth,
            max_iter: args.max_iter,
            tolerance: ExactRational::zero(),
            ..IterativeConfig::default()
        };
        let target = args.target;
        let started = Instant::now();
        let (_, report) = fit_iterative(&|x| Some(target.eval(x)), &params, &inner, &config)?;
        let ms = started.elapsed().as_secs_f64() * 1e3;
        let history = &report.convergence_history;
        let factor = match (history.first(), history.last()) {
            (Some(h0), Some(hn)) if report.iterations > 0 && h0.is_positive() => {
                (hn.to_f64() / h0.to_f64()).powf(1.0 / report.iterations as f64)
            }
            _ => 0.0,
        };
        rows.push(vec![
            "iterative".to_string(),
            report
                .knot_count
                .div_ceil(params.branch_count())
                .to_string(),
            args.depth.to_string(),
            level.to_string(),
            report.knot_count.to_string(),
            format!("{ms:.3}"),
            report.depth.to_string(),
            (report.depths_tried.len() - 1).to_string(),
            report.iterations.to_string(),
            factor.to_string(),
            report.residual_max.to_f64().to_string(),
        ]);
    }

    let monotone = knot_counts.windows(2).all(|w| w[0] <= w[1]);
    let records: Vec<Value> = rows
        .iter()
        .map(|row| {
            Value::Object(
                BENCH_COLUMNS
                    .iter()
                    .zip(row)
                    .map(|(k, v)| {
                        let cell = match v.parse::<f64>() {
                            Ok(x) => json!(x),
                            Err(_) if v.is_empty() => Value::Null,
                            Err(_) => json!(v),
                        };
                        (k.to_string(), cell)
                    })
                    .collect(),
            )
        })
        .collect();
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "bench",
        "numeric": "exact",
        "timing_unit": "ms (wall clock)",
        "rows": records,
        "knot_counts_monotone": monotone,
    });
    Ok((report, csvio::render(&BENCH_COLUMNS, &rows)))
}

pub fn cmd_describe(args: &DescribeArgs) -> Result<String, CliError> {
    let model = load_model(&args.model)?;
    if args.dot {
        return Ok(to_dot(&model));
    }
    let mut report = to_value(&describe(&model));
    report["schema_version"] = json!(SCHEMA_VERSION);
    report["command"] = json!("describe");
    report["meta"] = to_value(model.meta());
    Ok(pretty(&report))
}

/// Runs one command; the returned text belongs on stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit(args) => {
            let report = cmd_fit(&args)?;
            emit(pretty(&report), args.report.as_deref())
        }
        Command::Eval(args) => emit(cmd_eval(&args)?, args.out.as_deref()),
        Command::Check(args) => {
            let report = cmd_check(&args)?;
            emit(pretty(&report), args.report.as_deref())
        }
        Command::Bench(args) => {
            let (report, table) = cmd_bench(&args)?;
            let mut stdout = emit(table, args.out.as_deref())?;
            stdout.push_str(&emit(pretty(&report), args.report.as_deref())?);
            Ok(stdout)
        }
        Command::Describe(args) => emit(cmd_describe(&args)?, args.out.as_deref()),
    }
}
