//! The `intervol` command line.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{parse_nu_grid, ConfigFile, RunConfig};

use crate::diagnose::{self, default_nu_grid, evaluate_next_day, nu_scan, EvalResult, LikelihoodKind};
use crate::diurnal::{estimate_profile, DiurnalProfile, ProfileOptions};
use crate::dynamics::{filter_collect, ModelKind, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::estimate::{fit_all_days, median, BoundRegime, DayFit, FitOptions, FitResult};
use crate::pipeline::{
    aggregate_last_tick, clean, ingest_csv, read_changes_csv, summarize_changes, write_changes_csv, write_ticks_csv,
    ChangeSeries, CleaningConfig, OutlierCenter, Schema, TickSeries,
};
use crate::sim::{simulate, simulate_ticks, SimSpec, TickSimSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_WARNINGS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "INTERVOL_THREADS";

/// Sentinel written for unavailable statistics.
pub const MISSING: &str = "x";

const DEFAULT_MODELS: &str = "interval_normal,interval_t,skellam,zi_skellam";

#[derive(Debug, Parser)]
#[command(name = "intervol", version, about = "Volatility models for integer price changes")]
pub struct Cli {
    /// Configuration file of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drop off-hours ticks, bad prices and outliers.
    Clean(CleanArgs),
    /// Last-tick aggregation to per-day integer changes.
    Aggregate(AggregateArgs),
    /// Static t likelihood profile over degrees of freedom.
    ScanNu(ScanArgs),
    /// Fit models day by day and summarize medians.
    Fit(FitArgs),
    /// Evaluate frozen fits on the following day.
    Eval(EvalArgs),
    /// Generate synthetic changes or ticks.
    Simulate(SimulateArgs),
    /// Plot data for the histogram, likelihood profile and frequency gaps.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Inline `key=value` schema or path to a JSON schema.
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Outlier rule center: mean or median.
    #[arg(long)]
    pub outlier_center: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub deviations: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    /// Seconds per grid step.
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// `log:LO:HI:N` or a comma-separated list.
    #[arg(long)]
    pub nu_grid: Option<String>,
    /// continuous_density, interval or both.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Comma-separated model names.
    #[arg(long)]
    pub models: Option<String>,
    /// rugarch-like, fgarch-like, gas-like or unbounded.
    #[arg(long)]
    pub regime: Option<String>,
    /// Diurnal profile: per-day, pooled or none.
    #[arg(long)]
    pub diurnal: Option<String>,
    /// Keep score coefficients nonnegative.
    #[arg(long)]
    pub alpha_nonneg: bool,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    pub fit_dir: Option<PathBuf>,
    /// Change files holding the days after each fitted day.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON simulation spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a previous `fit`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// What a simulation spec file asks for.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "output", rename_all = "snake_case")]
pub enum SimFile {
    Changes(SimSpec),
    Ticks(TickSimSpec),
}

struct Context {
    file: ConfigFile,
    seed: u64,
    explicit_seed: bool,
    threads: usize,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(warnings) if warnings.is_empty() => EXIT_OK,
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            EXIT_WARNINGS
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn execute(cli: Cli) -> Result<Vec<String>> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let explicit: Option<u64> = file.pick(cli.seed, "seed")?;
    let seed = explicit.unwrap_or(1);
    let threads = file.pick(cli.threads, "threads")?.unwrap_or(0);
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    let ctx = Context { file, seed, explicit_seed: explicit.is_some(), threads };
    match cli.command {
        Command::Clean(a) => cmd_clean(&ctx, a),
        Command::Aggregate(a) => cmd_aggregate(&ctx, a),
        Command::ScanNu(a) => cmd_scan_nu(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::domain(format!("missing --{name}")))
}

fn require_inputs(inputs: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(Error::domain("missing --input"));
    }
    Ok(inputs)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn echo_config(ctx: &Context, out: &Path, mut cfg: RunConfig) -> Result<()> {
    cfg.seed = ctx.seed;
    cfg.threads = ctx.threads;
    write_json(&out.join("config.json"), &cfg)
}

fn base_config(command: &str, out: &Path) -> RunConfig {
    RunConfig {
        command: command.into(),
        inputs: vec![],
        schema: None,
        frequency: None,
        models: vec![],
        regime: None,
        nu_grid: None,
        out: out.to_path_buf(),
        seed: 0,
        threads: 0,
        extra: BTreeMap::new(),
    }
}

fn load_ticks(inputs: &[PathBuf], schema: &Schema) -> Result<(TickSeries, serde_json::Value)> {
    let mut all = Vec::new();
    let mut reports = Vec::new();
    for p in inputs {
        let (ticks, report) = ingest_csv(p, schema)?;
        reports.push(json!({ "path": p, "report": report }));
        all.extend(ticks.ticks);
    }
    if all.is_empty() {
        return Err(Error::InsufficientData("input holds no ticks".into()));
    }
    Ok((TickSeries::new(all, schema.tz()?), serde_json::Value::Array(reports)))
}

fn cmd_clean(ctx: &Context, a: CleanArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let inputs = require_inputs(f.pick_paths(&a.input, "input"))?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let schema_arg = f.pick(a.schema, "schema")?;
    let schema = schema_arg.as_deref().map(Schema::load).transpose()?.unwrap_or_default();
    let mut cfg = CleaningConfig::default();
    if let Some(w) = f.pick(a.window, "window")? {
        cfg.window = w;
    }
    if let Some(d) = f.pick(a.deviations, "deviations")? {
        cfg.deviations = d;
    }
    match f.pick(a.outlier_center, "outlier_center")?.as_deref() {
        None | Some("mean") => {}
        Some("median") => cfg.center = OutlierCenter::Median,
        Some(other) => return Err(Error::domain(format!("unknown outlier center `{other}`"))),
    }
    let (ticks, ingest) = load_ticks(&inputs, &schema)?;
    let (cleaned, report) = clean(&ticks, &cfg);
    let mut buf = Vec::new();
    write_ticks_csv(&mut buf, &cleaned)?;
    write_atomic(&out.join("cleaned_ticks.csv"), &buf)?;
    write_json(&out.join("cleaning_report.json"), &json!({ "ingest": ingest, "cleaning": report, "config": cfg }))?;
    let mut rc = base_config("clean", &out);
    rc.inputs = inputs;
    rc.schema = schema_arg;
    rc.extra.insert("cleaning".into(), serde_json::to_value(cfg)?);
    echo_config(ctx, &out, rc)?;
    Ok(report.warnings)
}

fn day_file(dir: &Path, day: &str) -> PathBuf {
    dir.join(format!("changes_{day}.csv"))
}

fn cmd_aggregate(ctx: &Context, a: AggregateArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let inputs = require_inputs(f.pick_paths(&a.input, "input"))?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let frequency = required(f.pick(a.frequency, "frequency")?, "frequency")?;
    let schema_arg = f.pick(a.schema, "schema")?;
    let schema = schema_arg.as_deref().map(Schema::load).transpose()?.unwrap_or_default();
    let (ticks, _) = load_ticks(&inputs, &schema)?;
    let (series, warnings) = aggregate_last_tick(&ticks, frequency)?;
    if series.is_empty() {
        return Err(Error::InsufficientData("no day has two grid points".into()));
    }
    for s in &series {
        let mut buf = Vec::new();
        write_changes_csv(&mut buf, std::slice::from_ref(s))?;
        write_atomic(&day_file(&out, &s.day), &buf)?;
    }
    let summary = summarize_changes(&series)?;
    write_json(
        &out.join("aggregate_report.json"),
        &json!({ "days": series.len(), "summary": summary, "warnings": warnings }),
    )?;
    let mut rc = base_config("aggregate", &out);
    rc.inputs = inputs;
    rc.schema = schema_arg;
    rc.frequency = Some(frequency);
    echo_config(ctx, &out, rc)?;
    Ok(warnings)
}

/// Loads change files; directories contribute their `changes_*.csv` files.
pub fn load_changes(inputs: &[PathBuf]) -> Result<Vec<ChangeSeries>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    name.starts_with("changes_") && name.ends_with(".csv")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    let mut days: BTreeMap<String, ChangeSeries> = BTreeMap::new();
    for f in &files {
        for s in read_changes_csv(f)? {
            if days.contains_key(&s.day) {
                return Err(Error::domain(format!("day {} appears in more than one input", s.day)));
            }
            days.insert(s.day.clone(), s);
        }
    }
    if days.is_empty() {
        return Err(Error::InsufficientData("no change series in the input".into()));
    }
    Ok(days.into_values().collect())
}

fn scan_kinds(kind: Option<&str>) -> Result<Vec<LikelihoodKind>> {
    match kind {
        None | Some("both") => Ok(vec![LikelihoodKind::ContinuousDensity, LikelihoodKind::Interval]),
        Some(k) => Ok(vec![k.parse()?]),
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        MISSING.into()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_else(|| MISSING.into())
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::domain(e.to_string()))
}

fn cmd_scan_nu(ctx: &Context, a: ScanArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let inputs = require_inputs(f.pick_paths(&a.input, "input"))?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let grid = match f.pick(a.nu_grid, "nu_grid")? {
        Some(g) => parse_nu_grid(&g)?,
        None => default_nu_grid(),
    };
    let kind_arg = f.pick(a.kind, "kind")?;
    let kinds = scan_kinds(kind_arg.as_deref())?;
    let days = load_changes(&inputs)?;
    let header: Vec<String> =
        ["day", "kind", "nu", "sigma2_hat", "loglik_avg", "floored", "is_max"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for day in &days {
        for &kind in &kinds {
            let scan = nu_scan(day, &grid, kind)?;
            let best = scan.argmax();
            for i in 0..grid.len() {
                rows.push(vec![
                    day.day.clone(),
                    kind.to_string(),
                    fmt_f(grid[i]),
                    fmt_f(scan.sigma2_hat[i]),
                    fmt_f(scan.loglik_avg[i]),
                    scan.floored[i].to_string(),
                    (best == Some(i)).to_string(),
                ]);
            }
        }
    }
    write_atomic(&out.join("nu_scan.csv"), &csv_bytes(&header, &rows)?)?;
    let mut rc = base_config("scan-nu", &out);
    rc.inputs = inputs;
    rc.nu_grid = Some(grid);
    rc.extra.insert("kind".into(), json!(kind_arg.unwrap_or_else(|| "both".into())));
    echo_config(ctx, &out, rc)?;
    Ok(vec![])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiurnalMode {
    PerDay,
    Pooled,
    None,
}

impl std::str::FromStr for DiurnalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "per-day" => Ok(DiurnalMode::PerDay),
            "pooled" => Ok(DiurnalMode::Pooled),
            "none" => Ok(DiurnalMode::None),
            other => Err(Error::domain(format!("unknown diurnal mode `{other}`"))),
        }
    }
}

fn estimate_profiles(days: &[ChangeSeries], mode: DiurnalMode) -> Result<Option<Vec<DiurnalProfile>>> {
    let opts = ProfileOptions::default();
    Ok(match mode {
        DiurnalMode::None => None,
        DiurnalMode::PerDay => {
            Some(days.iter().map(|d| estimate_profile(std::slice::from_ref(d), &opts)).collect::<Result<_>>()?)
        }
        DiurnalMode::Pooled => {
            let p = estimate_profile(days, &opts)?;
            Some(vec![p; days.len()])
        }
    })
}

/// Row labels of the summary table, in display order.
fn summary_rows(models: &[ModelKind]) -> Vec<String> {
    let order = ["mu", "theta", "omega", "alpha", "phi", "nu", "pi", "sigma2"];
    let present: BTreeSet<&str> = models.iter().flat_map(|m| m.param_names().iter().copied()).collect();
    let mut rows: Vec<String> = order.iter().filter(|n| present.contains(*n)).map(|s| s.to_string()).collect();
    rows.push("A".into());
    rows.push("loglik".into());
    rows
}

fn cmd_fit(ctx: &Context, a: FitArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let inputs = require_inputs(f.pick_paths(&a.input, "input"))?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let model_names = match f.pick(a.models, "models")? {
        Some(m) => config::split_list(&m),
        None => config::split_list(DEFAULT_MODELS),
    };
    let models: Vec<ModelKind> = model_names.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    let regime_name = f.pick(a.regime, "regime")?.unwrap_or_else(|| "unbounded".into());
    let alpha_nonneg = a.alpha_nonneg || f.get("alpha_nonneg").is_some_and(|v| v == "true");
    let regime = BoundRegime::by_name(&regime_name)?.with_alpha_nonneg(alpha_nonneg);
    let mode: DiurnalMode = f.pick(a.diurnal, "diurnal")?.as_deref().unwrap_or("per-day").parse()?;
    let mut opts = FitOptions::default();
    if let Some(m) = f.pick(a.min_len, "min_len")? {
        opts.min_len = m;
    }

    let days = load_changes(&inputs)?;
    let profiles = estimate_profiles(&days, mode)?;
    if let Some(p) = &profiles {
        match mode {
            DiurnalMode::Pooled => write_json(&out.join("profiles").join("pooled.json"), &p[0])?,
            _ => {
                for (d, prof) in days.iter().zip(p) {
                    write_json(&out.join("profiles").join(format!("{}.json", d.day)), prof)?;
                }
            }
        }
    }

    let mut warnings = Vec::new();
    let mut columns = Vec::new();
    let mut summaries = serde_json::Map::new();
    for &kind in &models {
        log::info!("fitting {kind} on {} days", days.len());
        let summary = fit_all_days(&days, &ModelSpec::new(kind), &regime, profiles.as_deref(), &opts)?;
        let dir = out.join("fits").join(kind.name());
        for d in &summary.days {
            match &d.fit {
                Some(fit) => write_json(&dir.join(format!("{}.json", d.day)), fit)?,
                None => write_json(&dir.join(format!("{}.json", d.day)), d)?,
            }
            if let Some(e) = &d.error {
                warnings.push(format!("{kind} {}: {e}", d.day));
            } else if d.converged().is_none() {
                warnings.push(format!("{kind} {}: did not converge", d.day));
            }
        }
        let status: Vec<serde_json::Value> = summary
            .days
            .iter()
            .map(|d| json!({ "day": d.day, "converged": d.converged().is_some(), "error": d.error }))
            .collect();
        summaries.insert(kind.name().into(), json!({ "medians": summary.medians, "days": status }));
        columns.push((kind, summary));
    }

    let header: Vec<String> =
        std::iter::once("statistic".to_string()).chain(models.iter().map(|m| m.name().to_string())).collect();
    let mut rows: Vec<Vec<String>> = summary_rows(&models)
        .into_iter()
        .map(|stat| {
            let mut row = vec![stat.clone()];
            for (_, s) in &columns {
                row.push(s.medians.get(&stat).map_or(MISSING.into(), |m| fmt_opt(m.value)));
            }
            row
        })
        .collect();
    let mut excluded = vec!["excluded_days".to_string()];
    for (_, s) in &columns {
        excluded.push(s.days.iter().filter(|d| d.converged().is_none()).count().to_string());
    }
    rows.push(excluded);
    write_atomic(&out.join("summary.csv"), &csv_bytes(&header, &rows)?)?;
    write_json(&out.join("summary.json"), &summaries)?;

    let mut rc = base_config("fit", &out);
    rc.inputs = inputs;
    rc.models = model_names;
    rc.regime = Some(regime_name);
    rc.extra.insert("diurnal".into(), serde_json::to_value(mode)?);
    rc.extra.insert("alpha_nonneg".into(), json!(alpha_nonneg));
    rc.extra.insert("fit_options".into(), serde_json::to_value(opts)?);
    echo_config(ctx, &out, rc)?;
    Ok(warnings)
}

/// Fits and profiles stored by a previous `fit` run.
pub struct FitDir {
    pub root: PathBuf,
    pub models: Vec<(ModelKind, Vec<FitResult>)>,
    pub failed: Vec<(ModelKind, String)>,
}

impl FitDir {
    pub fn load(root: &Path) -> Result<Self> {
        let fits = root.join("fits");
        let mut models = Vec::new();
        let mut failed = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&fits)
            .map_err(|e| Error::io(&fits, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        entries.sort();
        for dir in entries {
            let name = dir.file_name().unwrap().to_string_lossy().into_owned();
            let Ok(kind) = name.parse::<ModelKind>() else { continue };
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            let mut results = Vec::new();
            for file in files {
                let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
                match serde_json::from_str::<FitResult>(&text) {
                    Ok(fit) => results.push(fit),
                    Err(_) => {
                        let d: DayFit = serde_json::from_str(&text)?;
                        failed.push((kind, d.day));
                    }
                }
            }
            models.push((kind, results));
        }
        if models.is_empty() {
            return Err(Error::InsufficientData(format!("no fits under {}", fits.display())));
        }
        Ok(FitDir { root: root.to_path_buf(), models, failed })
    }

    /// The profile used when fitting `day`, if any.
    pub fn profile(&self, day: &str) -> Result<Option<DiurnalProfile>> {
        for candidate in [format!("{day}.json"), "pooled.json".to_string()] {
            let p = self.root.join("profiles").join(candidate);
            if p.is_file() {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                return Ok(Some(serde_json::from_str(&text)?));
            }
        }
        Ok(None)
    }

    pub fn inputs(&self) -> Result<Vec<PathBuf>> {
        let p = self.root.join("config.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        Ok(v["inputs"]
            .as_array()
            .map(|a| a.iter().filter_map(|x| x.as_str().map(PathBuf::from)).collect())
            .unwrap_or_default())
    }
}

fn cmd_eval(ctx: &Context, a: EvalArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let fit_dir = required(f.pick(a.fit_dir, "fit_dir")?, "fit-dir")?;
    let inputs = require_inputs(f.pick_paths(&a.input, "input"))?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let stored = FitDir::load(&fit_dir)?;
    let next_days = load_changes(&inputs)?;
    let mut warnings = Vec::new();
    let mut day_rows = Vec::new();
    let mut per_model: Vec<(ModelKind, Vec<EvalResult>)> = Vec::new();
    for (kind, fits) in &stored.models {
        let mut evals = Vec::new();
        for fit in fits {
            let Some(next) = next_days.iter().find(|d| d.day > fit.day) else {
                log::info!("{kind} {}: no following day in the input", fit.day);
                continue;
            };
            if !fit.converged {
                warnings.push(format!("{kind} {}: fit did not converge; skipped", fit.day));
                continue;
            }
            let profile = stored.profile(&fit.day)?;
            let r = evaluate_next_day(fit, next, profile.as_ref())?;
            day_rows.push(vec![
                kind.name().to_string(),
                fit.day.clone(),
                r.day.clone(),
                fmt_opt(r.loglik_avg_oos),
                fmt_opt(r.archlm_oos),
                r.failed.to_string(),
            ]);
            evals.push(r);
        }
        per_model.push((*kind, evals));
    }
    let header: Vec<String> =
        std::iter::once("statistic".to_string()).chain(per_model.iter().map(|(k, _)| k.name().to_string())).collect();
    let med = |f: &dyn Fn(&EvalResult) -> Option<f64>| -> Vec<String> {
        per_model.iter().map(|(_, ev)| fmt_opt(median(&mut ev.iter().filter_map(f).collect::<Vec<_>>()))).collect()
    };
    let mut rows = vec![
        [vec!["loglik_F".to_string()], med(&|r| r.loglik_avg_oos)].concat(),
        [vec!["A_F".to_string()], med(&|r| r.archlm_oos)].concat(),
    ];
    rows.push(
        [
            vec!["failed_days".to_string()],
            per_model.iter().map(|(_, ev)| ev.iter().filter(|r| r.failed).count().to_string()).collect(),
        ]
        .concat(),
    );
    rows.push(
        [vec!["evaluated_days".to_string()], per_model.iter().map(|(_, ev)| ev.len().to_string()).collect()].concat(),
    );
    write_atomic(&out.join("eval.csv"), &csv_bytes(&header, &rows)?)?;
    let day_header: Vec<String> =
        ["model", "fit_day", "eval_day", "loglik_F", "A_F", "failed"].iter().map(|s| s.to_string()).collect();
    write_atomic(&out.join("eval_days.csv"), &csv_bytes(&day_header, &day_rows)?)?;
    let mut rc = base_config("eval", &out);
    rc.inputs = inputs;
    rc.extra.insert("fit_dir".into(), json!(fit_dir));
    echo_config(ctx, &out, rc)?;
    Ok(warnings)
}

fn cmd_simulate(ctx: &Context, a: SimulateArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let spec_path = required(f.pick(a.spec, "spec")?, "spec")?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
    let mut spec: SimFile = serde_json::from_str(&text)?;
    let explicit_seed = ctx.explicit_seed;
    let mut warnings = Vec::new();
    match &mut spec {
        SimFile::Changes(s) => {
            if explicit_seed {
                s.seed = ctx.seed;
            }
            let (days, report) = simulate(s)?;
            for d in &days {
                let mut buf = Vec::new();
                write_changes_csv(&mut buf, std::slice::from_ref(d))?;
                write_atomic(&day_file(&out, &d.day), &buf)?;
            }
            if report.clipped > 0 {
                warnings.push(format!("{} draws clipped", report.clipped));
            }
            write_json(&out.join("sim_report.json"), &report)?;
        }
        SimFile::Ticks(s) => {
            if explicit_seed {
                s.seed = ctx.seed;
            }
            let ticks = simulate_ticks(s)?;
            let mut buf = Vec::new();
            write_ticks_csv(&mut buf, &ticks)?;
            write_atomic(&out.join("ticks.csv"), &buf)?;
        }
    }
    let mut rc = base_config("simulate", &out);
    rc.inputs = vec![spec_path];
    rc.extra.insert("spec".into(), serde_json::to_value(&spec)?);
    echo_config(ctx, &out, rc)?;
    Ok(warnings)
}

/// Largest |k| shown in frequency-gap tables.
const REPORT_SUPPORT_CAP: i64 = 50;
/// Time points sampled per day for the fitted-density overlay.
const DENSITY_SAMPLES: usize = 200;

fn cmd_report(ctx: &Context, a: ReportArgs) -> Result<Vec<String>> {
    let f = &ctx.file;
    let results = required(f.pick(a.results, "results")?, "results")?;
    let out = required(f.pick(a.out, "out")?, "out")?;
    let stored = FitDir::load(&results)?;
    let days = load_changes(&stored.inputs()?)?;
    let by_day: BTreeMap<&str, &ChangeSeries> = days.iter().map(|d| (d.day.as_str(), d)).collect();

    // histogram of observed changes
    let summary = summarize_changes(&days)?;
    let hist_rows: Vec<Vec<String>> = summary.histogram.iter().map(|(k, v)| vec![k.to_string(), fmt_f(*v)]).collect();
    write_atomic(&out.join("fig1_histogram.csv"), &csv_bytes(&["k".into(), "share".into()], &hist_rows)?)?;

    let lo = *summary.histogram.keys().next().unwrap();
    let hi = *summary.histogram.keys().last().unwrap();
    let cap = hi.abs().max(lo.abs()).min(REPORT_SUPPORT_CAP);
    let x_lo = lo.max(-REPORT_SUPPORT_CAP) as f64 - 0.5;
    let x_hi = hi.min(REPORT_SUPPORT_CAP) as f64 + 0.5;
    let points = ((x_hi - x_lo) / 0.01).round() as usize + 1;
    let xs: Vec<f64> = (0..points).map(|i| x_lo + 0.01 * i as f64).collect();

    let mut density_cols: Vec<(String, Vec<f64>)> = Vec::new();
    let mut gap_cols: Vec<(String, Vec<f64>)> = Vec::new();
    let support: Vec<i64> = (-cap..=cap).collect();
    for (kind, fits) in &stored.models {
        let mut dens = vec![0.0; xs.len()];
        let mut gaps = vec![0.0; support.len()];
        let mut used = 0usize;
        let mut samples = 0usize;
        for fit in fits.iter().filter(|f| f.converged) {
            let Some(day) = by_day.get(fit.day.as_str()) else { continue };
            let params = fit.model_params()?;
            let profile = stored.profile(&fit.day)?;
            let ln_s = match (kind.is_discrete(), &profile) {
                (true, Some(p)) => Some(p.ln_values(day)?),
                _ => None,
            };
            let (path, _) = filter_collect(&params, &day.changes, ln_s.as_deref(), None)?;
            let g = diagnose::fitted_vs_observed_paths(
                &params,
                &day.changes,
                &path.mu_path,
                &path.sigma2_path,
                -cap..=cap,
            )?;
            for (acc, v) in gaps.iter_mut().zip(&g) {
                *acc += v.difference;
            }
            let stride = (day.len() / DENSITY_SAMPLES).max(1);
            for t in (0..day.len()).step_by(stride) {
                for (acc, &x) in dens.iter_mut().zip(&xs) {
                    *acc += fitted_density(&params, path.mu_path[t], path.sigma2_path[t], x)?;
                }
                samples += 1;
            }
            used += 1;
        }
        if used == 0 {
            continue;
        }
        density_cols.push((kind.name().into(), dens.iter().map(|v| v / samples as f64).collect()));
        gap_cols.push((kind.name().into(), gaps.iter().map(|v| v / used as f64).collect()));
    }
    let header: Vec<String> =
        std::iter::once("x".to_string()).chain(density_cols.iter().map(|c| c.0.clone())).collect();
    let rows: Vec<Vec<String>> = (0..xs.len())
        .map(|i| std::iter::once(format!("{:.2}", xs[i])).chain(density_cols.iter().map(|c| fmt_f(c.1[i]))).collect())
        .collect();
    write_atomic(&out.join("fig1_density.csv"), &csv_bytes(&header, &rows)?)?;

    let header: Vec<String> = std::iter::once("k".to_string()).chain(gap_cols.iter().map(|c| c.0.clone())).collect();
    let rows: Vec<Vec<String>> = (0..support.len())
        .map(|i| std::iter::once(support[i].to_string()).chain(gap_cols.iter().map(|c| fmt_f(c.1[i]))).collect())
        .collect();
    write_atomic(&out.join("fig3_differences.csv"), &csv_bytes(&header, &rows)?)?;

    // likelihood profiles over degrees of freedom on all days pooled
    let pooled = ChangeSeries::regular("pooled", 1.0, days.iter().flat_map(|d| d.changes.iter().copied()).collect());
    let grid = default_nu_grid();
    let mut rows = Vec::new();
    for kind in [LikelihoodKind::ContinuousDensity, LikelihoodKind::Interval] {
        let scan = nu_scan(&pooled, &grid, kind)?;
        for i in 0..grid.len() {
            rows.push(vec![
                fmt_f(grid[i]),
                kind.to_string(),
                fmt_f(scan.loglik_avg[i]),
                fmt_f(scan.sigma2_hat[i]),
                scan.floored[i].to_string(),
            ]);
        }
    }
    let header: Vec<String> =
        ["nu", "kind", "loglik_avg", "sigma2_hat", "floored"].iter().map(|s| s.to_string()).collect();
    write_atomic(&out.join("fig2_nu_scan.csv"), &csv_bytes(&header, &rows)?)?;

    let mut rc = base_config("report", &out);
    rc.inputs = stored.inputs()?;
    rc.extra.insert("results".into(), json!(results));
    echo_config(ctx, &out, rc)?;
    Ok(vec![])
}

/// Density of the fitted conditional distribution at `x`; the Skellam
/// families are shown as a step function of their pmf.
fn fitted_density(params: &ModelParams, mu: f64, sigma2: f64, x: f64) -> Result<f64> {
    use crate::dist::{t_logdensity, Kernel};
    use crate::dynamics::Shape;
    let sigma = sigma2.sqrt();
    Ok(match params {
        ModelParams::Garch(p) => t_logdensity(x, mu, sigma2, p.nu)?.exp(),
        ModelParams::Gas(p, _) => t_logdensity(x, mu, sigma2, p.nu)?.exp(),
        ModelParams::Static(p) => t_logdensity(x, mu, sigma2, p.nu)?.exp(),
        ModelParams::Interval(p) => match p.shape {
            Shape::Normal => Kernel::Normal.pdf((x - mu) / sigma) / sigma,
            Shape::T { nu } => t_logdensity(x, mu, sigma2, nu)?.exp(),
            Shape::Skellam | Shape::ZiSkellam { .. } => {
                let k = (x - 0.5).ceil() as i64;
                diagnose::step_probability(params, mu, sigma2, k)?
            }
        },
    })
}
