use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use sitekeep_core::archive::{ArchiveClient, WithBackoff};
use sitekeep_core::change::{proactive_pass, ProactiveOptions};
use sitekeep_core::clock::SystemClock;
use sitekeep_core::continuity::{self, emit_alert, AlertSink, FileSink, WriterSink};
use sitekeep_core::discovery::{discover_with, DiscoveredSet, DiscoveryError};
use sitekeep_core::fetch::{HttpFetcher, PoliteFetcher};
use sitekeep_core::link::LinkClass;
use sitekeep_core::scheduler::coverage::{
    coverage_probability, simulate_coverage_with_order, CoverageParams, CoverageSimulation, SubmissionOrder,
};
use sitekeep_core::scheduler::lock::{LockError, RunLock};
use sitekeep_core::scheduler::{run_submissions, shuffle, RunBudget, RunReport};
use sitekeep_core::store::{self, RunLedgerEntry, StoreError, StoreSnapshot};

use crate::config::{self, Config, ConfigError, Layer, Mode};

/// Version tag of the JSON summary line.
pub const SUMMARY_SCHEMA: &str = "sitekeep.summary.v1";

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 4;
    pub const SEED_UNREACHABLE: i32 = 5;
    pub const ALREADY_RUNNING: i32 = 6;
    pub const CORRUPT_STORE: i32 = 7;
    /// Any other runtime failure (I/O, TLS setup, ...).
    pub const FAILURE: i32 = 8;
}

#[derive(Parser, Debug)]
#[command(name = "sitekeep", version, about = "Keep a website's pages captured in a public web archive")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, env = "SITEKEEP_CONFIG")]
    pub config: Option<PathBuf>,
    /// State store path (overrides `state_path`).
    #[arg(long, global = true)]
    pub state: Option<PathBuf>,
    /// Archive endpoint base URL (overrides `endpoint_base`).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Seed for the shuffle and the simulator (overrides `rng_seed`).
    #[arg(long = "seed-rng", global = true)]
    pub seed_rng: Option<u64>,
    /// End output with a one-line JSON summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Submission budget per run, e.g. `3h 55m` (overrides `cutoff`).
    #[arg(long, global = true)]
    pub cutoff: Option<String>,
    /// Skip pages disallowed by robots.txt.
    #[arg(long = "respect-robots", global = true)]
    pub respect_robots: bool,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Blind,
    Proactive,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Crawl the site and record what was found.
    Discover,
    /// Discover, then submit links to the archive within the budget.
    Run,
    /// Print ledger totals and the continuity check; exit code is its severity.
    Status,
    /// Record a zero-work liveness entry.
    Heartbeat,
    /// Compare analytic and Monte-Carlo coverage for budget-truncated runs.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Links on the site (N).
    #[arg(long, default_value_t = 100)]
    pub links: usize,
    /// Links submitted per run (C).
    #[arg(long, default_value_t = 40)]
    pub capacity: usize,
    /// Runs (R).
    #[arg(long, default_value_t = 6)]
    pub runs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Discovery(DiscoveryError::SeedNotPage { .. }) => exit::USAGE,
            CliError::Discovery(DiscoveryError::SeedUnreachable { .. }) => exit::SEED_UNREACHABLE,
            CliError::Lock(LockError::AlreadyRunning { .. }) => exit::ALREADY_RUNNING,
            CliError::Store(StoreError::CorruptStore { .. }) => exit::CORRUPT_STORE,
            _ => exit::FAILURE,
        }
    }
}

impl Cli {
    fn flag_layer(&self) -> Layer {
        let mut l = Layer::new();
        let mut set = |k: &str, v: String| {
            l.insert(k.to_string(), v);
        };
        if let Some(p) = &self.state {
            set("state_path", p.display().to_string());
        }
        if let Some(e) = &self.endpoint {
            set("endpoint_base", e.clone());
        }
        if let Some(s) = self.seed_rng {
            set("rng_seed", s.to_string());
        }
        if let Some(m) = self.mode {
            set("mode", match m {
                ModeArg::Blind => "blind",
                ModeArg::Proactive => "proactive",
            }
            .into());
        }
        if let Some(c) = &self.cutoff {
            set("cutoff", c.clone());
        }
        if self.respect_robots {
            set("robots", "respect".into());
        }
        l
    }

    /// Resolves the full configuration. Touches only the config file.
    pub fn load_config<I, K, V>(&self, env: I) -> Result<Config, CliError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                config::parse_file(&text, &path.display().to_string())?
            }
            None => Layer::new(),
        };
        let merged = config::merge(&file, &config::env_layer(env), &self.flag_layer());
        Ok(Config::from_layer(&merged)?)
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I, env: Vec<(String, String)>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, env, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            if cli.json {
                let _ = writeln!(out, "{}", summary(command_name(&cli.command), json!({ "error": e.to_string(), "exit_code": e.exit_code() })));
            }
            e.exit_code()
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Discover => "discover",
        Command::Run => "run",
        Command::Status => "status",
        Command::Heartbeat => "heartbeat",
        Command::Simulate(_) => "simulate",
    }
}

fn summary(command: &str, fields: Value) -> Value {
    let mut v = json!({ "schema": SUMMARY_SCHEMA, "command": command });
    if let (Some(o), Value::Object(f)) = (v.as_object_mut(), fields) {
        o.extend(f);
    }
    v
}

fn execute(cli: &Cli, env: Vec<(String, String)>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let config = cli.load_config(env)?;
    let (code, fields) = match &cli.command {
        Command::Discover => cmd_discover(&config, out, err)?,
        Command::Run => cmd_run(&config, out, err)?,
        Command::Status => cmd_status(&config, out, err)?,
        Command::Heartbeat => cmd_heartbeat(&config, out)?,
        Command::Simulate(args) => cmd_simulate(&config, args, out)?,
    };
    if cli.json {
        let mut fields = fields;
        fields["exit_code"] = json!(code);
        writeln!(out, "{}", summary(command_name(&cli.command), fields)).context("writing output")?;
    }
    Ok(code)
}

fn io(r: std::io::Result<()>) -> Result<(), CliError> {
    r.context("writing output").map_err(CliError::from)
}

fn http_fetcher(config: &Config) -> Result<HttpFetcher, CliError> {
    HttpFetcher::new(&config.user_agent, config.fetch_timeout)
        .map_err(|e| CliError::Other(anyhow::anyhow!("building HTTP client: {e}")))
}

fn discover_site(config: &Config, err: &mut dyn Write) -> Result<DiscoveredSet, CliError> {
    let seed = config.require_seed()?;
    let policy = config
        .crawl_policy()
        .map_err(|e| ConfigError::Invalid {
            key: "internal_hosts".into(),
            value: config.internal_hosts.join(","),
            reason: e.to_string(),
        })?;
    let set = discover_with(seed, http_fetcher(config)?, &policy, &config.discover_options(), &SystemClock)?;
    if set.truncated {
        io(writeln!(
            err,
            "warning: page cap of {} reached; discovery truncated",
            config.max_pages
        ))?;
    }
    for f in &set.failures {
        io(writeln!(err, "warning: {}: {}", f.url, f.cause))?;
    }
    Ok(set)
}

fn acquire_lock(config: &Config) -> Result<RunLock, CliError> {
    Ok(RunLock::acquire(&config.lock_path, Utc::now(), config.stale_lock_after)?)
}

fn cmd_discover(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<(i32, Value), CliError> {
    let _lock = acquire_lock(config)?;
    let mut db = store::load(&config.state_path)?;
    let set = discover_site(config, err)?;
    for (url, class) in set.entries() {
        db.upsert_discovered(url, *class, set.discovered_at);
    }
    store::save(&db, &config.state_path)?;
    let (pages, media) = (set.count(LinkClass::Page), set.count(LinkClass::Media));
    let excluded = set.count(LinkClass::ExcludedResource);
    io(writeln!(out, "pages: {pages}, media: {media}, excluded: {excluded}"))?;
    io(writeln!(
        out,
        "external: {}, failed pages: {}, elapsed: {:.1}s",
        set.external.len(),
        set.failures.len(),
        set.elapsed.as_secs_f64()
    ))?;
    Ok((
        exit::OK,
        json!({
            "pages": pages,
            "media": media,
            "excluded": excluded,
            "external": set.external.len(),
            "failed_pages": set.failures.len(),
            "truncated": set.truncated,
        }),
    ))
}

fn cmd_run(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<(i32, Value), CliError> {
    let started_at = Utc::now();
    let wall = Instant::now();
    let _lock = acquire_lock(config)?;
    let mut db = store::load(&config.state_path)?;
    let set = discover_site(config, err)?;
    for (url, class) in set.entries() {
        db.upsert_discovered(url, *class, set.discovered_at);
    }

    let client = ArchiveClient::with_options(&config.endpoint_base, &config.user_agent, config.submit_timeout)
        .context("building archive client")?;
    let mut client = WithBackoff::new(client, config.backoff(), SystemClock);
    let budget = RunBudget::new(config.cutoff, Utc::now()).context("run budget")?;
    let report = match config.mode {
        Mode::Blind => {
            let links = shuffle(&set, config.rng_seed).context("shuffling links")?;
            let report = run_submissions(&links, &mut client, &budget, &SystemClock, config.pacing);
            for s in &report.per_link {
                db.record_submission(&s.url, &s.outcome, s.at)?;
            }
            report
        }
        Mode::Proactive => {
            let fetcher = PoliteFetcher::new(http_fetcher(config)?, SystemClock, config.politeness_delay);
            let options = ProactiveOptions {
                pacing: config.pacing,
                rng_seed: config.rng_seed,
                canonicalizer: config.canonicalizer(),
            };
            proactive_pass(&set, &fetcher, &mut db, &mut client, &budget, &SystemClock, &options)
        }
    };

    let run_id = db.append_ledger(RunLedgerEntry {
        in_budget_duration: report.elapsed,
        attempted: report.attempted as u64,
        accepted: report.accepted as u64,
        errors: report.errors() as u64,
        stopped_by: report.stopped_by.as_str().into(),
        ..RunLedgerEntry::run(started_at, wall.elapsed())
    });
    store::save(&db, &config.state_path)?;
    print_report(out, run_id, config.mode, &report)?;
    Ok((
        exit::OK,
        json!({
            "run_id": run_id,
            "mode": config.mode.as_str(),
            "discovered": set.len(),
            "attempted": report.attempted,
            "accepted": report.accepted,
            "connection_errors": report.connection_errors,
            "rate_limited": report.rate_limited,
            "other_failures": report.other_failures,
            "unchanged": report.unchanged,
            "fetch_failures": report.fetch_failures,
            "stopped_by": report.stopped_by.as_str(),
            "in_budget_seconds": report.elapsed.as_secs_f64(),
        }),
    ))
}

fn print_report(out: &mut dyn Write, run_id: u64, mode: Mode, r: &RunReport) -> Result<(), CliError> {
    io(writeln!(out, "run {run_id} ({})", mode.as_str()))?;
    io(writeln!(
        out,
        "attempted: {}, accepted: {}, connection errors: {}, rate limited: {}, other failures: {}",
        r.attempted, r.accepted, r.connection_errors, r.rate_limited, r.other_failures
    ))?;
    if mode == Mode::Proactive {
        io(writeln!(out, "unchanged: {}, fetch failures: {}", r.unchanged, r.fetch_failures))?;
    }
    io(writeln!(
        out,
        "stopped by: {}, elapsed: {:.1}s",
        r.stopped_by.as_str(),
        r.elapsed.as_secs_f64()
    ))
}

fn cmd_status(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<(i32, Value), CliError> {
    let db: StoreSnapshot = store::load(&config.state_path)?;
    let stats = db.aggregate_stats();
    io(writeln!(out, "{}", stats.summary()))?;
    let now = Utc::now();
    let status = continuity::check(now, &db, &config.continuity);
    io(writeln!(out, "continuity: {status}"))?;
    if !status.is_healthy() {
        let mut stderr_sink = WriterSink::new("stderr", &mut *err);
        let mut file_sink = config.alert_file.as_ref().map(FileSink::new);
        let mut sinks: Vec<&mut dyn AlertSink> = vec![&mut stderr_sink];
        if let Some(f) = file_sink.as_mut() {
            sinks.push(f);
        }
        let report = emit_alert(&status, now, &mut sinks).context("emitting alert")?;
        drop(sinks);
        drop(stderr_sink);
        for f in report.failures {
            io(writeln!(err, "warning: alert sink {} failed: {}", f.sink, f.error))?;
        }
    }
    let totals = stats.totals;
    Ok((
        status.exit_code(),
        json!({
            "runs": totals.runs,
            "heartbeats": totals.heartbeats,
            "total_hours": stats.total_wall_hours(),
            "in_budget_hours": totals.total_in_budget_hours(),
            "mean_run_hours": stats.mean_run_hours(),
            "attempted": totals.attempted,
            "accepted": totals.accepted,
            "pages": stats.class_count(LinkClass::Page),
            "media": stats.class_count(LinkClass::Media),
            "continuity": status.to_json(),
        }),
    ))
}

fn cmd_heartbeat(config: &Config, out: &mut dyn Write) -> Result<(i32, Value), CliError> {
    let _lock = acquire_lock(config)?;
    let id = continuity::record_heartbeat(Utc::now(), &config.state_path)?;
    io(writeln!(out, "heartbeat recorded as entry {id}"))?;
    Ok((exit::OK, json!({ "run_id": id })))
}

fn cmd_simulate(config: &Config, args: &SimulateArgs, out: &mut dyn Write) -> Result<(i32, Value), CliError> {
    let params = CoverageParams::new(args.links, args.capacity, args.runs).map_err(|e| ConfigError::Invalid {
        key: "simulate".into(),
        value: format!("N={} C={} R={}", args.links, args.capacity, args.runs),
        reason: e.to_string(),
    })?;
    let seed = config.rng_seed.unwrap_or(0);
    let sim = |order| {
        simulate_coverage_with_order(&params, args.trials, seed, order).map_err(|e| ConfigError::Invalid {
            key: "trials".into(),
            value: args.trials.to_string(),
            reason: e.to_string(),
        })
    };
    let shuffled = sim(SubmissionOrder::Shuffled)?;
    let fixed = sim(SubmissionOrder::Fixed)?;
    let analytic = coverage_probability(&params);
    let row = |name: &str, s: &CoverageSimulation| {
        format!(
            "{name:<12} {:>8.4} {:>8.4} {:>8.4} {:>12.2}",
            s.mean_coverage(),
            s.min_coverage(),
            s.max_coverage(),
            s.overall_mean_submissions()
        )
    };
    io(writeln!(
        out,
        "N={} C={} R={} trials={} seed={seed}",
        args.links, args.capacity, args.runs, args.trials
    ))?;
    io(writeln!(out, "{:<12} {:>8} {:>8} {:>8} {:>12}", "order", "mean", "min", "max", "submissions"))?;
    io(writeln!(out, "{:<12} {:>8.6}", "analytic", analytic))?;
    io(writeln!(out, "{}", row("shuffled", &shuffled)))?;
    io(writeln!(out, "{}", row("fixed", &fixed)))?;
    let worst = shuffled.coverage.iter().map(|c| (c - analytic).abs()).fold(0.0, f64::max);
    Ok((
        exit::OK,
        json!({
            "n_links": args.links,
            "per_run_capacity": args.capacity,
            "n_runs": args.runs,
            "trials": args.trials,
            "analytic": analytic,
            "shuffled": { "mean": shuffled.mean_coverage(), "min": shuffled.min_coverage(), "max": shuffled.max_coverage() },
            "fixed": { "mean": fixed.mean_coverage(), "min": fixed.min_coverage(), "max": fixed.max_coverage() },
            "max_deviation": worst,
        }),
    ))
}
