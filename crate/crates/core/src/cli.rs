//! Command-line front end.
//!
//! Exit codes: 0 success, 2 no feasible fit, 64 usage, 65 data, 78 configuration.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crashes::{crash_summary, detect_crashes, write_crashes_csv, CrashConfig};
use crate::error::{Error, ErrorKind, FitError};
use crate::indicator::{scan_points, scan_with, write_reports_csv, ConfidenceReport, IndicatorConfig, ScheduleTag};
use crate::model::{generate_synthetic, LpplsParams, SyntheticSpec};
use crate::multilevel::{self, InstantRecord, LevelPlan, MultilevelTrace, TriggerKey};
use crate::optimizer::{fit_window, CmaesConfig, SearchBounds};
use crate::qualify::{qualify, FilterConfig};
use crate::series::{
    format_instant, load_csv, parse_instant, resample, write_csv, CsvOptions, FitWindow, PriceSeries, TimescaleLevel,
    WindowSchedule,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_FIT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_CONFIG: i32 = 78;

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::NoFit => EXIT_NO_FIT,
    }
}

/// Settings read from the TOML configuration file; command-line flags override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub schedule: WindowSchedule,
    pub max_gap_spacings: i64,
    pub search: SearchBounds,
    pub cmaes: CmaesConfig,
    pub filter: FilterConfig,
    pub crashes: CrashConfig,
    pub multilevel: MultilevelSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultilevelSettings {
    /// Trigger threshold, shared by every level unless `sublevel_threshold` is set.
    pub threshold: f64,
    pub sublevel_threshold: Option<f64>,
    /// Window schedule of the finer levels; the main schedule when absent.
    pub sublevel_schedule: Option<WindowSchedule>,
    pub trigger: TriggerKey,
    pub zero_run: usize,
}

impl Default for MultilevelSettings {
    fn default() -> Self {
        Self {
            threshold: 0.008,
            sublevel_threshold: None,
            sublevel_schedule: None,
            trigger: TriggerKey::Max,
            zero_run: 1,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let ind = IndicatorConfig::default();
        Self {
            seed: ind.seed,
            workers: None,
            schedule: WindowSchedule::BENCHMARK,
            max_gap_spacings: ind.max_gap_spacings,
            search: ind.search,
            cmaes: ind.cmaes,
            filter: ind.filter,
            crashes: CrashConfig::default(),
            multilevel: MultilevelSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn indicator(&self) -> IndicatorConfig {
        IndicatorConfig {
            search: self.search,
            cmaes: self.cmaes,
            filter: self.filter,
            seed: self.seed,
            max_gap_spacings: self.max_gap_spacings,
        }
    }

    /// Short digest of the settings that affect results, written into output
    /// headers. The worker count is left out.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&Self {
            workers: None,
            ..self.clone()
        })
        .expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    fn provenance(&self) -> String {
        format!("lppls {} config={}", env!("CARGO_PKG_VERSION"), self.digest())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lppls", version, about = "LPPLS bubble detection and crash statistics")]
pub struct Cli {
    /// TOML configuration file; flags take precedence.
    #[arg(long, global = true, env = "LPPLS_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate one window and print the fit, its filter verdict and fitted prices.
    Fit(FitArgs),
    /// Confidence indicator over a range of endpoints.
    Scan(ScanArgs),
    /// Multilevel detection over nested timescales.
    Multilevel(MultilevelArgs),
    /// Crash table of a daily series.
    Crashes(CrashesArgs),
    /// Write a synthetic LPPLS price series.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Price CSV with `timestamp` and `price` columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Sampling level such as 1d, 1h or 30m (inferred when omitted).
    #[arg(long)]
    pub level: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Window end: sample index or ISO-8601 time (default: last sample).
    #[arg(long)]
    pub t2: Option<String>,
    /// Window length in samples (default: all history up to 650).
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// First endpoint: index or ISO-8601 time.
    #[arg(long)]
    pub from: Option<String>,
    /// Last endpoint (inclusive).
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Window lengths as `min,max,step`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Also write short-term (30-200) and long-term (205-650) reports.
    #[arg(long)]
    pub split_horizon: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "lppls-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MultilevelArgs {
    /// One CSV per level, coarsest first.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    /// Level of each `--data` file, in the same order.
    #[arg(long)]
    pub level: Vec<String>,
    /// Trigger threshold on the confidence indicator.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Print each instant record to stdout as it is produced.
    #[arg(long)]
    pub follow: bool,
    #[arg(long, default_value = "lppls-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrashesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Minimum drop, as a fraction.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Resample sub-daily input to daily closes first.
    #[arg(long)]
    pub resample: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Critical time in samples from the first one (default: n + 20).
    #[arg(long)]
    pub tc: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub m: f64,
    #[arg(long, default_value_t = 9.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 8.0)]
    pub a: f64,
    #[arg(long, default_value_t = -0.08, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0024, allow_hyphen_values = true)]
    pub c1: f64,
    #[arg(long, default_value_t = 0.0018, allow_hyphen_values = true)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "1d")]
    pub level: String,
    /// Time of the first sample: epoch seconds or ISO-8601.
    #[arg(long, default_value = "2017-01-01")]
    pub start: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(Error::Io { source, .. }) if source.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            eprintln!("lppls: {e}");
            exit_code(e.kind())
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Error> {
    let config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Fit(a) => cmd_fit(a, config),
        Command::Scan(a) => cmd_scan(a, config),
        Command::Multilevel(a) => cmd_multilevel(a, config),
        Command::Crashes(a) => cmd_crashes(a, config),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn parse_level(s: &str) -> Result<TimescaleLevel, Error> {
    s.parse::<TimescaleLevel>()
        .map_err(|e| Error::Usage(format!("--level {s}: {e}")))
}

fn load(path: &Path, level: Option<&str>) -> Result<PriceSeries, Error> {
    let options = CsvOptions {
        level: level.map(parse_level).transpose()?,
        ..Default::default()
    };
    Ok(load_csv(path, &options)?)
}

/// An endpoint given as a sample index or a time; times resolve to the last sample at or before them.
fn resolve_point(series: &PriceSeries, spec: &str, flag: &str) -> Result<usize, Error> {
    let spec = spec.trim();
    if let Ok(i) = spec.parse::<usize>() {
        if i >= series.len() {
            return Err(Error::Usage(format!(
                "{flag} {i} is past the last sample ({})",
                series.len() - 1
            )));
        }
        return Ok(i);
    }
    let ts =
        parse_instant(spec).ok_or_else(|| Error::Usage(format!("{flag} `{spec}` is neither an index nor a time")))?;
    series
        .index_at_or_before(ts)
        .ok_or_else(|| Error::Usage(format!("{flag} {spec} precedes the first sample")))
}

fn parse_schedule(spec: Option<&str>, fallback: WindowSchedule) -> Result<WindowSchedule, Error> {
    match spec {
        None => Ok(fallback),
        Some(s) => s
            .parse::<WindowSchedule>()
            .map_err(|e| Error::Usage(format!("--schedule {s}: {e}"))),
    }
}

fn validate(config: &IndicatorConfig) -> Result<(), Error> {
    config.validate().map_err(|e| match e {
        FitError::Config(msg) => Error::Config(msg),
        other => other.into(),
    })
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let n = match workers {
        Some(0) => return Err(Error::Usage("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Serialize)]
struct SampleRow {
    t: f64,
    time: String,
    price: f64,
    fitted: f64,
}

fn cmd_fit(args: FitArgs, mut config: RunConfig) -> Result<i32, Error> {
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let ind = config.indicator();
    validate(&ind)?;
    let series = load(&args.data.data, args.data.level.as_deref())?;
    let t2 = match &args.t2 {
        Some(s) => resolve_point(&series, s, "--t2")?,
        None => series.len() - 1,
    };
    let length = args.length.unwrap_or((t2 + 1).min(650));
    if length > t2 + 1 {
        return Err(Error::Usage(format!(
            "--length {length} needs more history than the {} samples up to t2",
            t2 + 1
        )));
    }
    let window = FitWindow::ending_at(t2, length)?;
    let cmaes = CmaesConfig {
        seed: crate::indicator::window_seed(ind.seed, series.level().spacing(), series.timestamps()[t2], length),
        ..ind.cmaes
    };
    let fit = fit_window(&series, &window, &ind.search, &cmaes)?;
    let verdict = qualify(&fit, &series, &ind.filter);

    let times = series.window_times(&window);
    let samples: Vec<SampleRow> = times
        .iter()
        .enumerate()
        .map(|(k, t)| SampleRow {
            t: *t,
            time: format_instant(series.timestamps()[window.t1_index + k]),
            price: series.prices()[window.t1_index + k],
            fitted: fit.value(*t).map(f64::exp).unwrap_or(f64::NAN),
        })
        .collect();

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let w = |e| io_error(Path::new("<stdout>"), e);
    match args.format {
        Format::Json => {
            let doc = serde_json::json!({
                "window": {
                    "t1_index": window.t1_index,
                    "t2_index": window.t2_index,
                    "start": format_instant(series.timestamps()[window.t1_index]),
                    "end": format_instant(series.timestamps()[window.t2_index]),
                    "length": window.length(),
                },
                "fit": fit,
                "tc_time": format_instant(tc_instant(&series, &window, fit.params.tc)),
                "verdict": verdict,
                "samples": samples,
            });
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(out).map_err(w)?;
        }
        Format::Csv => {
            let p = fit.params;
            writeln!(out, "# {}", config.provenance()).map_err(w)?;
            writeln!(
                out,
                "# window {}..{} ({} samples)",
                format_instant(series.timestamps()[window.t1_index]),
                format_instant(series.timestamps()[window.t2_index]),
                window.length()
            )
            .map_err(w)?;
            writeln!(
                out,
                "# tc={} ({}) m={} omega={} A={} B={} C1={} C2={} ssr={} converged={}",
                p.tc,
                format_instant(tc_instant(&series, &window, p.tc)),
                p.m,
                p.omega,
                p.a,
                p.b,
                p.c1,
                p.c2,
                fit.ssr,
                fit.converged
            )
            .map_err(w)?;
            writeln!(
                out,
                "# verdict pass={} {}",
                verdict.pass,
                serde_json::to_string(&verdict).map_err(|e| Error::Config(e.to_string()))?
            )
            .map_err(w)?;
            writeln!(out, "t,time,price,fitted").map_err(w)?;
            for s in &samples {
                writeln!(out, "{},{},{},{}", s.t, s.time, s.price, s.fitted).map_err(w)?;
            }
        }
    }
    Ok(EXIT_OK)
}

/// Wall-clock instant of a window-relative critical time.
fn tc_instant(series: &PriceSeries, window: &FitWindow, tc: f64) -> i64 {
    let start = series.timestamps()[window.t1_index];
    start + (tc * series.level().spacing() as f64).round() as i64
}

fn endpoint_range(
    series: &PriceSeries,
    from: Option<&str>,
    to: Option<&str>,
    schedule: &WindowSchedule,
) -> Result<(usize, usize), Error> {
    let lo = match from {
        Some(s) => resolve_point(series, s, "--from")?,
        None => (schedule.min_length - 1).min(series.len() - 1),
    };
    let hi = match to {
        Some(s) => resolve_point(series, s, "--to")?,
        None => series.len() - 1,
    };
    if lo > hi {
        return Err(Error::Usage(format!("--from ({lo}) is after --to ({hi})")));
    }
    Ok((lo, hi))
}

fn write_reports(
    dir: &Path,
    stem: &str,
    reports: &[ConfidenceReport],
    format: Format,
    provenance: &str,
) -> Result<PathBuf, Error> {
    let path = dir.join(format!(
        "{stem}.{}",
        match format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    ));
    let mut out = create(&path)?;
    match format {
        Format::Csv => {
            write_reports_csv(&mut out, reports, &[provenance.to_string()]).map_err(|e| io_error(&path, e))?
        }
        Format::Json => {
            let doc = serde_json::json!({ "provenance": provenance, "reports": reports });
            serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(out).map_err(|e| io_error(&path, e))?;
        }
    }
    out.flush().map_err(|e| io_error(&path, e))?;
    Ok(path)
}

fn cmd_scan(args: ScanArgs, mut config: RunConfig) -> Result<i32, Error> {
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    if args.stride == 0 {
        return Err(Error::Usage("--stride must be positive".into()));
    }
    config.schedule = parse_schedule(args.schedule.as_deref(), config.schedule)?;
    let ind = config.indicator();
    validate(&ind)?;
    let series = load(&args.data.data, args.data.level.as_deref())?;
    let (lo, hi) = endpoint_range(&series, args.from.as_deref(), args.to.as_deref(), &config.schedule)?;
    let total = scan_points(lo..=hi, args.stride).len();
    let pool = thread_pool(config.workers)?;
    let done = AtomicUsize::new(0);
    let progress = |r: &ConfidenceReport| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!(
            "scan {k}/{total} t2={} ci_pos={:.3} ci_neg={:.3}",
            format_instant(r.t2),
            r.ci_pos,
            r.ci_neg
        );
    };
    let schedule = config.schedule;
    let result = pool.install(|| scan_with(&series, lo..=hi, args.stride, &schedule, &ind, &progress));
    for (t2, reason) in &result.skipped {
        eprintln!("skipped t2 index {t2}: {reason}");
    }

    let provenance = config.provenance();
    let tag = ScheduleTag::of(&schedule);
    let mut written = vec![write_reports(
        &args.out,
        &format!("scan_{}", tag.as_str()),
        &result.reports,
        args.format,
        &provenance,
    )?];
    if args.split_horizon {
        for part in [WindowSchedule::SHORT_TERM, WindowSchedule::LONG_TERM] {
            let reports: Vec<ConfidenceReport> = result.reports.iter().map(|r| r.restricted(&part)).collect();
            let stem = format!("scan_{}", ScheduleTag::of(&part).as_str());
            written.push(write_reports(&args.out, &stem, &reports, args.format, &provenance)?);
        }
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn write_trace(dir: &Path, trace: &MultilevelTrace, provenance: &str) -> Result<(), Error> {
    let path = dir.join("multilevel_records.csv");
    let mut out = create(&path)?;
    let e = |err| io_error(&path, err);
    writeln!(out, "# {provenance}").map_err(e)?;
    writeln!(out, "time,level,n_windows,ci_pos,ci_neg,triggered,episode").map_err(e)?;
    for r in &trace.records {
        writeln!(out, "{}", record_line(r)).map_err(e)?;
    }
    out.flush().map_err(e)?;

    let path = dir.join("multilevel_episodes.json");
    let mut out = create(&path)?;
    let episodes: Vec<serde_json::Value> = trace
        .episodes
        .iter()
        .map(|ep| {
            serde_json::json!({
                "id": ep.id,
                "level": ep.level,
                "parent": ep.parent,
                "trigger_time": format_instant(ep.trigger_time),
                "start": format_instant(ep.start),
                "end": format_instant(ep.end),
                "steps": ep.steps,
                "truncated": ep.truncated.as_ref().map(|t| serde_json::json!({
                    "time": format_instant(t.time),
                    "reason": t.reason,
                })),
            })
        })
        .collect();
    let doc = serde_json::json!({ "provenance": provenance, "episodes": episodes });
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|err| Error::Config(err.to_string()))?;
    writeln!(out).map_err(|err| io_error(&path, err))?;
    out.flush().map_err(|err| io_error(&path, err))
}

fn record_line(r: &InstantRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        format_instant(r.time),
        r.level,
        r.n_windows,
        r.ci_pos,
        r.ci_neg,
        r.triggered,
        r.episode.map(|e| e.to_string()).unwrap_or_default()
    )
}

fn cmd_multilevel(args: MultilevelArgs, mut config: RunConfig) -> Result<i32, Error> {
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.workers.is_some() {
        config.workers = args.workers;
    }
    if let Some(t) = args.threshold {
        config.multilevel.threshold = t;
    }
    if args.stride == 0 {
        return Err(Error::Usage("--stride must be positive".into()));
    }
    if !args.level.is_empty() && args.level.len() != args.data.len() {
        return Err(Error::Usage(format!(
            "{} --level values for {} --data files",
            args.level.len(),
            args.data.len()
        )));
    }
    config.schedule = parse_schedule(args.schedule.as_deref(), config.schedule)?;
    let ind = config.indicator();
    validate(&ind)?;
    let feeds: Vec<PriceSeries> = args
        .data
        .iter()
        .enumerate()
        .map(|(i, p)| load(p, args.level.get(i).map(String::as_str)))
        .collect::<Result<_, _>>()?;

    let ml = &config.multilevel;
    let specs = feeds
        .iter()
        .enumerate()
        .map(|(i, f)| multilevel::LevelSpec {
            level: f.level().clone(),
            schedule: if i == 0 {
                config.schedule
            } else {
                ml.sublevel_schedule.unwrap_or(config.schedule)
            },
            threshold: if i == 0 {
                ml.threshold
            } else {
                ml.sublevel_threshold.unwrap_or(ml.threshold)
            },
        })
        .collect();
    let mut plan = LevelPlan::new(specs)?;
    plan.trigger = ml.trigger;
    plan.zero_run = ml.zero_run;

    let (lo, hi) = endpoint_range(&feeds[0], args.from.as_deref(), args.to.as_deref(), &config.schedule)?;
    let pool = thread_pool(config.workers)?;
    let follow = args.follow;
    let stdout = io::stdout();
    let mut observer = |r: &InstantRecord| {
        if follow {
            let mut out = stdout.lock();
            let _ = writeln!(out, "{}", record_line(r));
            let _ = out.flush();
        }
    };
    let trace = pool.install(|| multilevel::run(&feeds, &plan, lo..=hi, args.stride, &ind, &mut observer))?;
    for (t, reason) in &trace.skipped {
        eprintln!("skipped {}: {reason}", format_instant(*t));
    }
    write_trace(&args.out, &trace, &config.provenance())?;
    eprintln!(
        "{} records, {} episodes written to {}",
        trace.records.len(),
        trace.episodes.len(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_crashes(args: CrashesArgs, mut config: RunConfig) -> Result<i32, Error> {
    if let Some(t) = args.threshold {
        config.crashes.threshold = t;
    }
    let mut series = load(&args.data.data, args.data.level.as_deref())?;
    if args.resample && series.level().spacing() < 86_400 {
        series = resample(&series, &TimescaleLevel::daily())?;
    }
    let events = detect_crashes(&series, &config.crashes)?;
    let summary = crash_summary(&events);
    let comments = [config.provenance()];
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            write_crashes_csv(&mut out, &events, &comments).map_err(|e| io_error(path, e))?;
            out.flush().map_err(|e| io_error(path, e))?;
        }
        None => {
            let stdout = io::stdout();
            write_crashes_csv(stdout.lock(), &events, &comments).map_err(|e| io_error(Path::new("<stdout>"), e))?;
        }
    }
    eprintln!(
        "{} crashes above {:.1}%",
        summary.count,
        config.crashes.threshold * 100.0
    );
    Ok(EXIT_OK)
}

fn cmd_synth(args: SynthArgs) -> Result<i32, Error> {
    let tc = args.tc.unwrap_or(args.n as f64 + 20.0);
    if args.n < 2 {
        return Err(Error::Usage("--n must be at least 2".into()));
    }
    if !(tc > (args.n - 1) as f64) {
        return Err(Error::Usage(format!(
            "--tc {tc} must exceed the last sample index {}",
            args.n - 1
        )));
    }
    if !(args.noise >= 0.0) {
        return Err(Error::Usage("--noise must be nonnegative".into()));
    }
    let level = parse_level(&args.level)?;
    let start =
        parse_instant(&args.start).ok_or_else(|| Error::Usage(format!("--start `{}` is not a time", args.start)))?;
    let spec = SyntheticSpec {
        params: LpplsParams {
            tc,
            m: args.m,
            omega: args.omega,
            a: args.a,
            b: args.b,
            c1: args.c1,
            c2: args.c2,
        },
        n: args.n,
        noise_sd: args.noise,
        seed: args.seed,
        level,
        start,
    };
    let series = generate_synthetic(&spec)?;
    let mut out = create(&args.out)?;
    let header = format!(
        "lppls {} synthetic n={} seed={} noise={}",
        env!("CARGO_PKG_VERSION"),
        args.n,
        args.seed,
        args.noise
    );
    write_csv(&mut out, &series, &[header]).map_err(|e| io_error(&args.out, e))?;
    out.flush().map_err(|e| io_error(&args.out, e))?;

    let mut sidecar = args.out.clone().into_os_string();
    sidecar.push(".params.json");
    let sidecar = PathBuf::from(sidecar);
    let mut side = create(&sidecar)?;
    let doc = serde_json::json!({
        "params": spec.params,
        "n": spec.n,
        "noise_sd": spec.noise_sd,
        "seed": spec.seed,
        "level": spec.level.name(),
        "start": format_instant(spec.start),
    });
    serde_json::to_writer_pretty(&mut side, &doc).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(side).map_err(|e| io_error(&sidecar, e))?;
    side.flush().map_err(|e| io_error(&sidecar, e))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(ErrorKind::Usage), 64);
        assert_eq!(exit_code(ErrorKind::Data), 65);
        assert_eq!(exit_code(ErrorKind::Config), 78);
        assert_eq!(exit_code(ErrorKind::NoFit), 2);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn digest_ignores_workers_only() {
        let cfg = RunConfig::default();
        let threaded = RunConfig {
            workers: Some(8),
            ..cfg.clone()
        };
        let reseeded = RunConfig { seed: 1, ..cfg.clone() };
        assert_eq!(threaded.digest(), cfg.digest());
        assert_ne!(reseeded.digest(), cfg.digest());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 9\n[cmaes]\nrestarts = 1\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.cmaes.restarts, 1);
        assert_eq!(cfg.cmaes.population_size, 7);
        assert_eq!(cfg.schedule, WindowSchedule::BENCHMARK);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sead = 1\n").is_err());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
