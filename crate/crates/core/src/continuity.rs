//! Watchdog for the archiver's own schedule.
//!
//! Hosted schedulers can silently stop running a job, e.g. by disabling
//! scheduled workflows after a period of repository inactivity. [`check`]
//! looks at the gap since the last ledger entry and grades it; [`emit_alert`]
//! pushes a non-healthy grade to stderr, a file, and the process exit code.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::json;
use thiserror::Error;

use crate::store::{self, StoreError, StoreSnapshot};

const HOUR: Duration = Duration::from_secs(3600);
const DAY: Duration = Duration::from_secs(86_400);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContinuityPolicyError {
    #[error("warn_after must exceed expected_cadence")]
    WarnBeforeCadence,
    #[error("alarm_margin must be shorter than platform_disable_after")]
    MarginTooWide,
    #[error("expected_cadence must be positive")]
    ZeroCadence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContinuityPolicy {
    pub expected_cadence: Duration,
    pub warn_after: Duration,
    pub platform_disable_after: Duration,
    pub alarm_margin: Duration,
}

impl Default for ContinuityPolicy {
    fn default() -> Self {
        let cadence = 4 * HOUR;
        Self {
            expected_cadence: cadence,
            warn_after: 3 * cadence,
            platform_disable_after: 60 * DAY,
            alarm_margin: 7 * DAY,
        }
    }
}

impl ContinuityPolicy {
    pub fn validate(&self) -> Result<(), ContinuityPolicyError> {
        if self.expected_cadence.is_zero() {
            return Err(ContinuityPolicyError::ZeroCadence);
        }
        if self.warn_after <= self.expected_cadence {
            return Err(ContinuityPolicyError::WarnBeforeCadence);
        }
        if self.alarm_margin >= self.platform_disable_after {
            return Err(ContinuityPolicyError::MarginTooWide);
        }
        Ok(())
    }

    fn at_risk_from(&self) -> Duration {
        self.platform_disable_after - self.alarm_margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuityState {
    Healthy,
    Stale { missed_runs: u64 },
    AtRisk { until_disable: Duration },
    /// `gap` is `None` when no run was ever recorded.
    Lapsed { gap: Option<Duration> },
}

impl ContinuityState {
    pub fn severity(&self) -> u8 {
        match self {
            ContinuityState::Healthy => 0,
            ContinuityState::Stale { .. } => 1,
            ContinuityState::AtRisk { .. } => 2,
            ContinuityState::Lapsed { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ContinuityState::Healthy => "healthy",
            ContinuityState::Stale { .. } => "stale",
            ContinuityState::AtRisk { .. } => "at_risk",
            ContinuityState::Lapsed { .. } => "lapsed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContinuityStatus {
    pub state: ContinuityState,
    pub gap: Option<Duration>,
    /// Latest entry of any kind, heartbeats included.
    pub last_run_at: Option<DateTime<Utc>>,
    /// Latest entry that did real work.
    pub last_productive_run_at: Option<DateTime<Utc>>,
}

impl ContinuityStatus {
    pub fn exit_code(&self) -> i32 {
        i32::from(self.state.severity())
    }

    pub fn is_healthy(&self) -> bool {
        self.state == ContinuityState::Healthy
    }

    pub fn to_json(&self) -> serde_json::Value {
        let days_until_disable = match self.state {
            ContinuityState::AtRisk { until_disable } => Some(days(until_disable)),
            _ => None,
        };
        let missed_runs = match self.state {
            ContinuityState::Stale { missed_runs } => Some(missed_runs),
            _ => None,
        };
        json!({
            "status": self.state.name(),
            "severity": self.state.severity(),
            "gap_seconds": self.gap.map(|g| g.as_secs()),
            "gap_days": self.gap.map(days),
            "days_until_disable": days_until_disable,
            "missed_runs": missed_runs,
            "last_run_at": self.last_run_at.map(|t| t.to_rfc3339()),
            "last_productive_run_at": self.last_productive_run_at.map(|t| t.to_rfc3339()),
        })
    }
}

fn days(d: Duration) -> f64 {
    d.as_secs_f64() / DAY.as_secs_f64()
}

impl fmt::Display for ContinuityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let gap = match self.gap {
            Some(g) if g < 2 * DAY => format!("{:.1} hours", g.as_secs_f64() / 3600.0),
            Some(g) => format!("{:.1} days", days(g)),
            None => "never".into(),
        };
        match self.state {
            ContinuityState::Healthy => write!(f, "healthy: last run {gap} ago"),
            ContinuityState::Stale { missed_runs } => {
                write!(f, "stale: last run {gap} ago, {missed_runs} scheduled run(s) missed")
            }
            ContinuityState::AtRisk { until_disable } => write!(
                f,
                "at risk: last run {gap} ago, scheduled runs may be disabled in {:.1} days",
                days(until_disable)
            ),
            ContinuityState::Lapsed { gap: None } => {
                f.write_str("lapsed: no run has ever been recorded")
            }
            ContinuityState::Lapsed { gap: Some(_) } => write!(
                f,
                "lapsed: last run {gap} ago, past the platform's disable threshold"
            ),
        }
    }
}

/// Grades the gap between `now` and the latest ledger entry.
pub fn check(now: DateTime<Utc>, store: &StoreSnapshot, policy: &ContinuityPolicy) -> ContinuityStatus {
    let last = store.last_entry().map(|e| e.started_at);
    let last_productive = store.last_productive_run().map(|e| e.started_at);
    let gap = last.map(|t| (now - t).to_std().unwrap_or(Duration::ZERO));
    let state = match gap {
        None => ContinuityState::Lapsed { gap: None },
        Some(g) if g >= policy.platform_disable_after => ContinuityState::Lapsed { gap: Some(g) },
        Some(g) if g >= policy.at_risk_from() => ContinuityState::AtRisk {
            until_disable: policy.platform_disable_after - g,
        },
        Some(g) if g >= policy.warn_after => {
            let periods = g.as_secs_f64() / policy.expected_cadence.as_secs_f64();
            ContinuityState::Stale {
                missed_runs: (periods.floor() as u64).saturating_sub(1),
            }
        }
        Some(_) => ContinuityState::Healthy,
    };
    ContinuityStatus {
        state,
        gap,
        last_run_at: last,
        last_productive_run_at: last_productive,
    }
}

/// Loads the store at `path`, appends a heartbeat entry, and saves it.
pub fn record_heartbeat(now: DateTime<Utc>, path: &Path) -> Result<u64, StoreError> {
    let mut snapshot = store::load(path)?;
    let id = snapshot.record_heartbeat(now);
    store::save(&snapshot, path)?;
    Ok(id)
}

pub trait AlertSink {
    fn name(&self) -> String;
    fn emit(&mut self, line: &str) -> io::Result<()>;
}

/// Writes alerts to any writer, typically stderr.
pub struct WriterSink<W> {
    name: String,
    writer: W,
}

impl<W: Write> WriterSink<W> {
    pub fn new(name: impl Into<String>, writer: W) -> Self {
        Self {
            name: name.into(),
            writer,
        }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl WriterSink<io::Stderr> {
    pub fn stderr() -> Self {
        Self::new("stderr", io::stderr())
    }
}

impl<W: Write> AlertSink for WriterSink<W> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn emit(&mut self, line: &str) -> io::Result<()> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()
    }
}

/// Appends one JSON line per alert.
pub struct FileSink {
    path: PathBuf,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl AlertSink for FileSink {
    fn name(&self) -> String {
        self.path.display().to_string()
    }

    fn emit(&mut self, line: &str) -> io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        writeln!(f, "{line}")?;
        f.sync_all()
    }
}

#[derive(Debug, Error)]
pub enum AlertError {
    #[error("refusing to alert on a healthy status")]
    Healthy,
}

#[derive(Debug)]
pub struct SinkFailure {
    pub sink: String,
    pub error: io::Error,
}

#[derive(Debug)]
pub struct AlertReport {
    /// 1 stale, 2 at risk, 3 lapsed.
    pub exit_code: i32,
    pub failures: Vec<SinkFailure>,
}

/// The single-line JSON alert for `status` at `now`.
pub fn alert_line(status: &ContinuityStatus, now: DateTime<Utc>) -> String {
    let mut v = status.to_json();
    v["alert_at"] = json!(now.to_rfc3339());
    v["message"] = json!(status.to_string());
    v.to_string()
}

/// Writes the alert to every sink; a failing sink does not stop the others.
pub fn emit_alert(
    status: &ContinuityStatus,
    now: DateTime<Utc>,
    sinks: &mut [&mut dyn AlertSink],
) -> Result<AlertReport, AlertError> {
    if status.is_healthy() {
        return Err(AlertError::Healthy);
    }
    let line = alert_line(status, now);
    let failures = sinks
        .iter_mut()
        .filter_map(|sink| {
            sink.emit(&line).err().map(|error| SinkFailure {
                sink: sink.name(),
                error,
            })
        })
        .collect();
    Ok(AlertReport {
        exit_code: status.exit_code(),
        failures,
    })
}
