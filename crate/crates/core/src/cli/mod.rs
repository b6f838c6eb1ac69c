//! Batch front end: parse a run configuration, execute one operation on a
//! catalogue model and write JSON (plus CSV traces).
//!
//! Exit codes: 0 success (verdicts such as a Condition-4 failure are data),
//! 1 configuration or input error, 2 numerical failure, 3 I/O error.

mod ops;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::DataSet;
use crate::error::GeomError;
use crate::models::ModelParams;
use crate::tolerance::Tolerances;
use crate::transport::Trace;

pub use report::{report_all, ReportSummary, SummaryRow};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    Fit,
    Metric,
    Connection,
    Curvature,
    Classify,
    Affine,
    Massieu,
    Geodesic,
    Transport,
    Field,
    Pythagoras,
    Report,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fit => "fit",
            Self::Metric => "metric",
            Self::Connection => "connection",
            Self::Curvature => "curvature",
            Self::Classify => "classify",
            Self::Affine => "affine",
            Self::Massieu => "massieu",
            Self::Geodesic => "geodesic",
            Self::Transport => "transport",
            Self::Field => "field",
            Self::Pythagoras => "pythagoras",
            Self::Report => "report",
        }
    }
}

/// Everything one run needs. Loadable from JSON; command-line flags override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<String>,
    pub op: Option<Op>,
    pub params: ModelParams,
    /// `default` or `lo:hi:n,lo:hi:n,...`.
    pub grid: Option<String>,
    pub start: Option<Vec<f64>>,
    pub velocity: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub targets: Option<Vec<Vec<f64>>>,
    pub other: Option<Vec<f64>>,
    pub path: Option<Vec<Vec<f64>>>,
    pub data: Option<DataSet>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub timing: bool,
    /// Force finite differences instead of analytic derivatives.
    pub finite_difference: bool,
    pub fibre_k: Option<usize>,
    pub step: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            op: None,
            params: ModelParams::default(),
            grid: None,
            start: None,
            velocity: None,
            t: None,
            targets: None,
            other: None,
            path: None,
            data: None,
            tolerances: Tolerances::default(),
            seed: 42,
            out: None,
            timing: false,
            finite_difference: false,
            fibre_k: None,
            step: None,
        }
    }
}

#[derive(Parser, Debug, Default)]
#[command(name = "dsm-geom", version, about = "Geometry of data set models from their divergences")]
pub struct Args {
    /// Catalogue model name.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub op: Option<Op>,
    /// JSON run configuration; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `default` or `lo:hi:n,lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Comma-separated point.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub velocity: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Points separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub targets: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub other: Option<String>,
    /// Path vertices separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub path: Option<String>,
    /// Data set as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub levels: Option<String>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    /// Tolerance override `key=value`; repeatable.
    #[arg(long = "tol")]
    pub tol: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, or directory for `report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
    /// Use finite differences instead of analytic derivatives.
    #[arg(long)]
    pub fd: bool,
    #[arg(long)]
    pub fibre_k: Option<usize>,
    /// Integrator step.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Geom(GeomError),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Geom(e) if e.is_input_error() => 1,
            Self::Geom(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Geom(e) => write!(f, "{e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        Self::Geom(e)
    }
}

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| config_err(format!("bad number `{v}` in `{s}`")))
        })
        .collect()
}

pub fn parse_points(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(parse_vector).collect()
}

/// `lo:hi:n` per axis, comma separated.
pub fn parse_grid(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let axes = s
        .split(',')
        .map(|axis| {
            let parts: Vec<&str> = axis.split(':').collect();
            if parts.len() != 3 {
                return Err(config_err(format!("grid axis `{axis}` is not lo:hi:n")));
            }
            let lo = parts[0].trim().parse::<f64>();
            let hi = parts[1].trim().parse::<f64>();
            let n = parts[2].trim().parse::<usize>();
            match (lo, hi, n) {
                (Ok(lo), Ok(hi), Ok(n)) if n >= 1 && lo <= hi => Ok((lo, hi, n)),
                _ => Err(config_err(format!("grid axis `{axis}` is not lo:hi:n with n >= 1"))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(crate::chart::grid(&axes))
}

fn read_data(s: &str) -> Result<DataSet, CliError> {
    let text = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| CliError::Io(format!("{s}: {e}")))?
    };
    let data: DataSet = serde_json::from_str(&text).map_err(|e| config_err(format!("data set: {e}")))?;
    data.validate()?;
    Ok(data)
}

/// Loads `--config` (if any) and applies the flags on top.
pub fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &args.model {
        cfg.model = Some(m.clone());
    }
    if let Some(op) = args.op {
        cfg.op = Some(op);
    }
    if let Some(g) = &args.grid {
        cfg.grid = Some(g.clone());
    }
    if let Some(s) = &args.start {
        cfg.start = Some(parse_vector(s)?);
    }
    if let Some(s) = &args.velocity {
        cfg.velocity = Some(parse_vector(s)?);
    }
    if let Some(t) = args.t {
        cfg.t = Some(t);
    }
    if let Some(s) = &args.targets {
        cfg.targets = Some(parse_points(s)?);
    }
    if let Some(s) = &args.other {
        cfg.other = Some(parse_vector(s)?);
    }
    if let Some(s) = &args.path {
        cfg.path = Some(parse_points(s)?);
    }
    if let Some(s) = &args.data {
        cfg.data = Some(read_data(s)?);
    }
    if let Some(s) = &args.levels {
        cfg.params.levels = parse_vector(s)?;
    }
    if let Some(v) = args.kappa {
        cfg.params.kappa = v;
    }
    if let Some(v) = args.lambda {
        cfg.params.lambda = v;
    }
    if let Some(v) = args.mu0 {
        cfg.params.mu0 = v;
    }
    if let Some(v) = args.sigma0 {
        cfg.params.sigma0 = v;
    }
    for t in &args.tol {
        cfg.tolerances.apply(t)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    cfg.timing |= args.timing;
    cfg.finite_difference |= args.fd;
    if let Some(k) = args.fibre_k {
        cfg.fibre_k = Some(k);
    }
    if let Some(s) = args.step {
        cfg.step = Some(s);
    }
    if cfg.op.is_none() {
        return Err(config_err("--op is required"));
    }
    if cfg.model.is_none() && cfg.op != Some(Op::Report) {
        return Err(config_err("--model is required"));
    }
    Ok(cfg)
}

/// The JSON document and optional trace of one operation.
pub struct Outcome {
    pub document: Value,
    pub trace: Option<Trace>,
}

/// Runs the configured operation. `report` writes its own files into `out`.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let op = cfg.op.ok_or_else(|| config_err("--op is required"))?;
    if op == Op::Report {
        let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("report"));
        let summary = report_all(&dir, cfg)?;
        let mut document = json!({
            "schema_version": SCHEMA_VERSION,
            "model": Value::Null,
            "op": op.name(),
            "inputs": { "params": cfg.params, "seed": cfg.seed, "out": dir.display().to_string() },
            "results": summary,
            "residuals": {},
            "verdicts": { "all_expected": summary.rows.iter().all(|r| r.matches_expected) },
            "tolerances": cfg.tolerances,
            "runtime_ms": Value::Null,
        });
        if cfg.timing {
            document["runtime_ms"] = json!(started.elapsed().as_secs_f64() * 1e3);
        }
        return Ok(Outcome { document, trace: None });
    }
    let res = ops::execute(op, cfg)?;
    let mut document = json!({
        "schema_version": SCHEMA_VERSION,
        "model": res.model,
        "op": op.name(),
        "inputs": res.inputs,
        "results": res.results,
        "residuals": res.residuals,
        "verdicts": res.verdicts,
        "tolerances": cfg.tolerances,
        "runtime_ms": Value::Null,
    });
    if cfg.timing {
        document["runtime_ms"] = json!(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Outcome {
        document,
        trace: res.trace,
    })
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialise");
    s.push('\n');
    s
}

/// Writes the outcome: JSON to `out` (or stdout) and a trace CSV beside it.
/// An `out` ending in `.csv` receives the trace, the JSON goes next to it.
pub fn emit(outcome: &Outcome, out: Option<&Path>, op: Op) -> Result<(), CliError> {
    if op == Op::Report {
        println!("{}", to_json(&outcome.document).trim_end());
        return Ok(());
    }
    let json_text = to_json(&outcome.document);
    match out {
        None => {
            print!("{json_text}");
            Ok(())
        }
        Some(p) => {
            let is_csv = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let (json_path, csv_path) = if is_csv {
                (p.with_extension("json"), p.to_path_buf())
            } else {
                (p.to_path_buf(), p.with_extension("csv"))
            };
            write_file(&json_path, &json_text)?;
            if let Some(trace) = &outcome.trace {
                write_file(&csv_path, &trace.to_csv())?;
            }
            Ok(())
        }
    }
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>, CliError> {
    match std::env::var("DSM_GEOM_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| config_err(format!("DSM_GEOM_THREADS must be a positive integer, got `{v}`")))?;
            if n == 0 {
                return Err(config_err("DSM_GEOM_THREADS must be positive"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map(Some)
                .map_err(|e| config_err(format!("thread pool: {e}")))
        }
        Err(_) => Ok(None),
    }
}

fn main_inner(args: &Args) -> Result<(), CliError> {
    let cfg = resolve(args)?;
    let op = cfg.op.expect("resolve checks op");
    let outcome = match thread_pool()? {
        Some(pool) => pool.install(|| run(&cfg))?,
        None => run(&cfg)?,
    };
    emit(&outcome, cfg.out.as_deref(), op)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match main_inner(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dsm-geom: {e}");
            e.exit_code()
        }
    }
}
