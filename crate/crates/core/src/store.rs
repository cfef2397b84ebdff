//! Persistent per-URL history and run ledger.
//!
//! On disk the store is UTF-8 text with one JSON object per LF-terminated
//! line: a header first, then one `record` line per URL, then one `run` or
//! `heartbeat` line per ledger entry:
//!
//! ```text
//! {"kind":"header","schema_version":1}
//! {"kind":"record","url":"https://example.org/","class":"page",...}
//! {"kind":"run","run_id":1,"started_at":"2026-01-15T00:00:00Z",...}
//! ```
//!
//! Saves go to a temp file in the same directory which is then renamed over
//! the old store, so a crash mid-save leaves the previous store intact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::ops::Add;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::SubmissionOutcome;
use crate::link::{LinkClass, NormalizedUrl};

pub const SCHEMA_VERSION: u32 = 1;
pub const DIGEST_ALGORITHM: &str = "sha-256";
/// Records archived more than this many times are flagged as redundant.
pub const REDUNDANCY_FLAG: u64 = 50;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corrupt store {path}: line {line} (byte offset {offset}): {reason}")]
    CorruptStore {
        path: PathBuf,
        line: usize,
        offset: usize,
        reason: String,
    },
    #[error("store {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("no record for {0}")]
    UnknownUrl(String),
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub url: NormalizedUrl,
    pub class: LinkClass,
    pub first_seen: DateTime<Utc>,
    pub last_submitted: Option<DateTime<Utc>>,
    pub submit_count: u64,
    pub last_digest: Option<String>,
    pub digest_algorithm: String,
    /// Non-accepted outcomes by kind.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub error_tally: BTreeMap<String, u64>,
}

impl UrlRecord {
    pub fn new(url: NormalizedUrl, class: LinkClass, first_seen: DateTime<Utc>) -> Self {
        Self {
            url,
            class,
            first_seen,
            last_submitted: None,
            submit_count: 0,
            last_digest: None,
            digest_algorithm: DIGEST_ALGORITHM.to_string(),
            error_tally: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryKind {
    #[default]
    Run,
    /// Zero-work liveness marker.
    Heartbeat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLedgerEntry {
    pub run_id: u64,
    #[serde(skip)]
    pub kind: EntryKind,
    pub started_at: DateTime<Utc>,
    /// Whole invocation, discovery included.
    #[serde(with = "millis", rename = "wall_duration_ms")]
    pub wall_duration: Duration,
    /// Time spent inside the submission budget.
    #[serde(with = "millis", rename = "in_budget_duration_ms")]
    pub in_budget_duration: Duration,
    pub attempted: u64,
    pub accepted: u64,
    pub errors: u64,
    pub stopped_by: String,
}

impl RunLedgerEntry {
    /// A run entry with no counts; `run_id` is assigned on append.
    pub fn run(started_at: DateTime<Utc>, wall_duration: Duration) -> Self {
        Self {
            run_id: 0,
            kind: EntryKind::Run,
            started_at,
            wall_duration,
            in_budget_duration: wall_duration,
            attempted: 0,
            accepted: 0,
            errors: 0,
            stopped_by: String::new(),
        }
    }

    pub fn heartbeat(at: DateTime<Utc>) -> Self {
        Self {
            kind: EntryKind::Heartbeat,
            wall_duration: Duration::ZERO,
            in_budget_duration: Duration::ZERO,
            stopped_by: "heartbeat".into(),
            ..Self::run(at, Duration::ZERO)
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineOut<'a> {
    Header { schema_version: u32 },
    Record(&'a UrlRecord),
    Run(&'a RunLedgerEntry),
    Heartbeat(&'a RunLedgerEntry),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LineIn {
    Header { schema_version: u32 },
    Record(UrlRecord),
    Run(RunLedgerEntry),
    Heartbeat(RunLedgerEntry),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreSnapshot {
    pub schema_version: u32,
    records: BTreeMap<NormalizedUrl, UrlRecord>,
    ledger: Vec<RunLedgerEntry>,
}

impl Default for StoreSnapshot {
    fn default() -> Self {
        Self::new()
    }
}

impl StoreSnapshot {
    pub fn new() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            records: BTreeMap::new(),
            ledger: Vec::new(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &UrlRecord> {
        self.records.values()
    }

    pub fn record(&self, url: &NormalizedUrl) -> Option<&UrlRecord> {
        self.records.get(url)
    }

    pub fn ledger(&self) -> &[RunLedgerEntry] {
        &self.ledger
    }

    /// Adds a record for a newly seen URL; refreshes the class of a known one.
    pub fn upsert_discovered(&mut self, url: &NormalizedUrl, class: LinkClass, at: DateTime<Utc>) {
        self.records
            .entry(url.clone())
            .and_modify(|r| r.class = class)
            .or_insert_with(|| UrlRecord::new(url.clone(), class, at));
    }

    /// Counts an archive only for accepted outcomes; anything else goes to the
    /// record's error tally.
    pub fn record_submission(
        &mut self,
        url: &NormalizedUrl,
        outcome: &SubmissionOutcome,
        at: DateTime<Utc>,
    ) -> Result<(), StoreError> {
        let rec = self
            .records
            .get_mut(url)
            .ok_or_else(|| StoreError::UnknownUrl(url.to_string()))?;
        if outcome.is_accepted() {
            rec.submit_count += 1;
            rec.last_submitted = Some(at);
        } else {
            *rec.error_tally.entry(outcome.kind().to_string()).or_default() += 1;
        }
        Ok(())
    }

    pub fn set_digest(&mut self, url: &NormalizedUrl, digest: String) -> Result<(), StoreError> {
        let rec = self
            .records
            .get_mut(url)
            .ok_or_else(|| StoreError::UnknownUrl(url.to_string()))?;
        rec.last_digest = Some(digest);
        rec.digest_algorithm = DIGEST_ALGORITHM.to_string();
        Ok(())
    }

    pub fn next_run_id(&self) -> u64 {
        self.ledger.last().map_or(1, |e| e.run_id + 1)
    }

    /// Appends `entry` with the next run id and returns that id.
    pub fn append_ledger(&mut self, mut entry: RunLedgerEntry) -> u64 {
        entry.run_id = self.next_run_id();
        let id = entry.run_id;
        self.ledger.push(entry);
        id
    }

    pub fn record_heartbeat(&mut self, now: DateTime<Utc>) -> u64 {
        self.append_ledger(RunLedgerEntry::heartbeat(now))
    }

    pub fn last_entry(&self) -> Option<&RunLedgerEntry> {
        self.ledger.iter().max_by_key(|e| e.started_at)
    }

    pub fn last_productive_run(&self) -> Option<&RunLedgerEntry> {
        self.ledger
            .iter()
            .filter(|e| e.kind == EntryKind::Run)
            .max_by_key(|e| e.started_at)
    }

    pub fn ledger_totals(&self) -> LedgerTotals {
        LedgerTotals::of(&self.ledger)
    }

    pub fn aggregate_stats(&self) -> AggregateStats {
        let mut per_class = BTreeMap::new();
        let mut redundancy = RedundancyHistogram::default();
        for rec in self.records.values() {
            *per_class.entry(rec.class).or_insert(0) += 1;
            redundancy.add(rec.submit_count);
        }
        AggregateStats {
            totals: self.ledger_totals(),
            per_class,
            redundancy,
        }
    }

    /// Records archived more than [`REDUNDANCY_FLAG`] times, most first.
    pub fn redundancy_report(&self) -> Vec<(&NormalizedUrl, u64)> {
        let mut out: Vec<_> = self
            .records
            .values()
            .filter(|r| r.submit_count > REDUNDANCY_FLAG)
            .map(|r| (&r.url, r.submit_count))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        out
    }

    /// Wall-clock hours of productive runs, by UTC start date.
    pub fn wall_hours_by_day(&self) -> BTreeMap<NaiveDate, f64> {
        let mut out = BTreeMap::new();
        for e in self.ledger.iter().filter(|e| e.kind == EntryKind::Run) {
            *out.entry(e.started_at.date_naive()).or_insert(0.0) += hours(e.wall_duration);
        }
        out
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let mut push = |line: LineOut<'_>| {
            out.push_str(&serde_json::to_string(&line).expect("store lines serialize"));
            out.push('\n');
        };
        push(LineOut::Header {
            schema_version: self.schema_version,
        });
        for rec in self.records.values() {
            push(LineOut::Record(rec));
        }
        for entry in &self.ledger {
            push(match entry.kind {
                EntryKind::Run => LineOut::Run(entry),
                EntryKind::Heartbeat => LineOut::Heartbeat(entry),
            });
        }
        out
    }

    pub fn from_lines(text: &str, path: &Path) -> Result<Self, StoreError> {
        let mut snapshot = StoreSnapshot::new();
        let mut saw_header = false;
        let mut offset = 0usize;
        for (idx, raw) in text.split_inclusive('\n').enumerate() {
            let line_no = idx + 1;
            let corrupt = |reason: String| StoreError::CorruptStore {
                path: path.to_path_buf(),
                line: line_no,
                offset,
                reason,
            };
            let line = raw.strip_suffix('\n').unwrap_or(raw);
            if line.trim().is_empty() {
                return Err(corrupt("blank line".into()));
            }
            let parsed: LineIn = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            match parsed {
                LineIn::Header { schema_version } => {
                    if saw_header || line_no != 1 {
                        return Err(corrupt("header must be the first line".into()));
                    }
                    if schema_version == 0 || schema_version > SCHEMA_VERSION {
                        return Err(corrupt(format!("unsupported schema_version {schema_version}")));
                    }
                    snapshot.schema_version = schema_version;
                    saw_header = true;
                }
                _ if !saw_header => return Err(corrupt("missing header line".into())),
                LineIn::Record(rec) => {
                    if rec.last_submitted.is_some() != (rec.submit_count > 0) {
                        return Err(corrupt(
                            "last_submitted must be present exactly when submit_count > 0".into(),
                        ));
                    }
                    if !snapshot.ledger.is_empty() {
                        return Err(corrupt("record line after ledger lines".into()));
                    }
                    if snapshot.records.insert(rec.url.clone(), rec).is_some() {
                        return Err(corrupt("duplicate record".into()));
                    }
                }
                LineIn::Run(entry) | LineIn::Heartbeat(entry) if entry.run_id < snapshot.next_run_id() => {
                    return Err(corrupt(format!("run_id {} is not increasing", entry.run_id)));
                }
                LineIn::Run(entry) => snapshot.ledger.push(entry),
                LineIn::Heartbeat(mut entry) => {
                    entry.kind = EntryKind::Heartbeat;
                    snapshot.ledger.push(entry);
                }
            }
            offset += raw.len();
        }
        if !text.is_empty() && !saw_header {
            return Err(StoreError::CorruptStore {
                path: path.to_path_buf(),
                line: 1,
                offset: 0,
                reason: "missing header line".into(),
            });
        }
        Ok(snapshot)
    }
}

fn hours(d: Duration) -> f64 {
    d.as_secs_f64() / 3600.0
}

/// Reads the store; a missing file is an empty store.
pub fn load(path: &Path) -> Result<StoreSnapshot, StoreError> {
    match fs::read(path) {
        Ok(bytes) => {
            let text = String::from_utf8(bytes).map_err(|e| {
                let offset = e.utf8_error().valid_up_to();
                let line = e.as_bytes()[..offset].iter().filter(|&&b| b == b'\n').count() + 1;
                StoreError::CorruptStore {
                    path: path.to_path_buf(),
                    line,
                    offset,
                    reason: "invalid UTF-8".into(),
                }
            })?;
            StoreSnapshot::from_lines(&text, path)
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(StoreSnapshot::new()),
        Err(source) => Err(StoreError::IoFailure {
            path: path.to_path_buf(),
            source,
        }),
    }
}

pub fn save(snapshot: &StoreSnapshot, path: &Path) -> Result<(), StoreError> {
    save_with_hook(snapshot, path, |_| Ok(()))
}

/// Like [`save`], calling `before_rename` once the temp file is fully written
/// and synced. An error from the hook abandons the save and leaves the
/// existing store untouched.
pub fn save_with_hook<H>(snapshot: &StoreSnapshot, path: &Path, before_rename: H) -> Result<(), StoreError>
where
    H: FnOnce(&Path) -> io::Result<()>,
{
    let io_err = |source| StoreError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(io_err)?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".sitekeep-store")
        .tempfile_in(&dir)
        .map_err(io_err)?;
    tmp.write_all(snapshot.to_lines().as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    before_rename(tmp.path()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    #[cfg(unix)]
    if let Ok(d) = fs::File::open(&dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

/// Sums over ledger entries. Totals of two ledgers add up to the totals of
/// their concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LedgerTotals {
    pub runs: u64,
    pub heartbeats: u64,
    pub wall: Duration,
    pub in_budget: Duration,
    pub attempted: u64,
    pub accepted: u64,
    pub errors: u64,
}

impl LedgerTotals {
    pub fn of(entries: &[RunLedgerEntry]) -> Self {
        entries.iter().fold(Self::default(), |mut t, e| {
            match e.kind {
                EntryKind::Heartbeat => t.heartbeats += 1,
                EntryKind::Run => {
                    t.runs += 1;
                    t.wall += e.wall_duration;
                    t.in_budget += e.in_budget_duration;
                    t.attempted += e.attempted;
                    t.accepted += e.accepted;
                    t.errors += e.errors;
                }
            }
            t
        })
    }

    pub fn total_wall_hours(&self) -> f64 {
        hours(self.wall)
    }

    pub fn total_in_budget_hours(&self) -> f64 {
        hours(self.in_budget)
    }

    pub fn mean_run_hours(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.total_wall_hours() / self.runs as f64
        }
    }
}

impl Add for LedgerTotals {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            runs: self.runs + o.runs,
            heartbeats: self.heartbeats + o.heartbeats,
            wall: self.wall + o.wall,
            in_budget: self.in_budget + o.in_budget,
            attempted: self.attempted + o.attempted,
            accepted: self.accepted + o.accepted,
            errors: self.errors + o.errors,
        }
    }
}

/// Records bucketed by how often they were archived: 0, 1-9, 10-49, 50+.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RedundancyHistogram {
    pub never: u64,
    pub one_to_nine: u64,
    pub ten_to_forty_nine: u64,
    pub fifty_plus: u64,
}

impl RedundancyHistogram {
    fn add(&mut self, count: u64) {
        match count {
            0 => self.never += 1,
            1..=9 => self.one_to_nine += 1,
            10..=49 => self.ten_to_forty_nine += 1,
            _ => self.fifty_plus += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub totals: LedgerTotals,
    pub per_class: BTreeMap<LinkClass, usize>,
    pub redundancy: RedundancyHistogram,
}

impl AggregateStats {
    pub fn total_runs(&self) -> u64 {
        self.totals.runs
    }

    pub fn total_wall_hours(&self) -> f64 {
        self.totals.total_wall_hours()
    }

    pub fn mean_run_hours(&self) -> f64 {
        self.totals.mean_run_hours()
    }

    pub fn class_count(&self, class: LinkClass) -> usize {
        self.per_class.get(&class).copied().unwrap_or(0)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "runs: {}", self.totals.runs);
        let _ = writeln!(s, "heartbeats: {}", self.totals.heartbeats);
        let _ = writeln!(s, "total hours: {:.1}", self.total_wall_hours());
        let _ = writeln!(s, "in-budget hours: {:.1}", self.totals.total_in_budget_hours());
        let _ = writeln!(s, "mean run hours: {:.2}", self.mean_run_hours());
        let _ = writeln!(
            s,
            "urls: pages {}, media {}",
            self.class_count(LinkClass::Page),
            self.class_count(LinkClass::Media)
        );
        let r = &self.redundancy;
        let _ = write!(
            s,
            "archived 0x: {}, 1-9x: {}, 10-49x: {}, 50+x: {}",
            r.never, r.one_to_nine, r.ten_to_forty_nine, r.fifty_plus
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn u(s: &str) -> NormalizedUrl {
        NormalizedUrl::parse(s).unwrap()
    }

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2026-01-15T00:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn accepted() -> SubmissionOutcome {
        SubmissionOutcome::Accepted { snapshot_hint: None }
    }

    fn entry(hours_each: f64, at: DateTime<Utc>) -> RunLedgerEntry {
        RunLedgerEntry::run(at, Duration::from_secs_f64(hours_each * 3600.0))
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.jsonl");
        save(&StoreSnapshot::new(), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "{\"kind\":\"header\",\"schema_version\":1}\n");
        let back = load(&path).unwrap();
        assert_eq!(back, StoreSnapshot::new());
        assert_eq!(back.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn missing_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load(&dir.path().join("nope")).unwrap(), StoreSnapshot::new());
    }

    #[test]
    fn populated_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.jsonl");
        let mut s = StoreSnapshot::new();
        for (i, class) in [LinkClass::Page, LinkClass::Media, LinkClass::Page].into_iter().enumerate() {
            s.upsert_discovered(&u(&format!("https://site.test/{i}")), class, t0());
        }
        s.record_submission(&u("https://site.test/0"), &accepted(), t0()).unwrap();
        s.set_digest(&u("https://site.test/0"), "ab".repeat(32)).unwrap();
        s.append_ledger(entry(3.5, t0()));
        s.record_heartbeat(t0() + chrono::Duration::hours(4));
        save(&s, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.ledger()[1].kind, EntryKind::Heartbeat);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert!(text.lines().last().unwrap().contains("\"kind\":\"heartbeat\""));
    }

    #[test]
    fn truncated_last_line_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.jsonl");
        let mut s = StoreSnapshot::new();
        s.upsert_discovered(&u("https://site.test/"), LinkClass::Page, t0());
        s.append_ledger(entry(1.0, t0()));
        let full = s.to_lines();
        let cut = &full[..full.len() - 12];
        fs::write(&path, cut).unwrap();
        match load(&path) {
            Err(StoreError::CorruptStore { line, offset, .. }) => {
                assert_eq!(line, 3);
                let first_two: usize = full.lines().take(2).map(|l| l.len() + 1).sum();
                assert_eq!(offset, first_two);
            }
            other => panic!("expected corrupt store, got {other:?}"),
        }
    }

    #[test]
    fn structural_corruption() {
        let p = Path::new("x");
        assert!(StoreSnapshot::from_lines("{\"kind\":\"run\"}\n", p).is_err());
        let hdr = "{\"kind\":\"header\",\"schema_version\":1}\n";
        assert!(StoreSnapshot::from_lines(&format!("{hdr}{hdr}"), p).is_err());
        assert!(StoreSnapshot::from_lines("{\"kind\":\"header\",\"schema_version\":9}\n", p).is_err());
        assert!(StoreSnapshot::from_lines(&format!("{hdr}\n"), p).is_err());
        let mut s = StoreSnapshot::new();
        s.append_ledger(entry(1.0, t0()));
        s.append_ledger(entry(1.0, t0()));
        let swapped = s.to_lines().replace("\"run_id\":2", "\"run_id\":1");
        assert!(StoreSnapshot::from_lines(&swapped, p).is_err());
    }

    #[test]
    fn submissions_only_count_when_accepted() {
        let mut s = StoreSnapshot::new();
        let url = u("https://site.test/");
        s.upsert_discovered(&url, LinkClass::Page, t0());
        s.record_submission(&url, &accepted(), t0()).unwrap();
        assert_eq!(s.record(&url).unwrap().submit_count, 1);
        for _ in 0..4 {
            s.record_submission(&url, &accepted(), t0()).unwrap();
        }
        s.record_submission(&url, &SubmissionOutcome::ConnectionError { cause: "x".into() }, t0())
            .unwrap();
        let rec = s.record(&url).unwrap();
        assert_eq!(rec.submit_count, 5);
        assert_eq!(rec.error_tally["connection_error"], 1);
        assert!(matches!(
            s.record_submission(&u("https://site.test/unknown"), &accepted(), t0()),
            Err(StoreError::UnknownUrl(_))
        ));
    }

    #[test]
    fn fifty_two_archives_flagged() {
        let mut s = StoreSnapshot::new();
        let url = u("https://site.test/");
        s.upsert_discovered(&url, LinkClass::Page, t0());
        s.upsert_discovered(&u("https://site.test/b"), LinkClass::Page, t0());
        for _ in 0..52 {
            s.record_submission(&url, &accepted(), t0()).unwrap();
        }
        assert_eq!(s.record(&url).unwrap().submit_count, 52);
        assert_eq!(s.redundancy_report(), vec![(&url, 52)]);
        let stats = s.aggregate_stats();
        assert_eq!(stats.redundancy.fifty_plus, 1);
        assert_eq!(stats.redundancy.never, 1);
    }

    #[test]
    fn large_ledger_aggregates() {
        let mut s = StoreSnapshot::new();
        for i in 0..580 {
            s.append_ledger(entry(4.31, t0() + chrono::Duration::hours(4 * i)));
        }
        let stats = s.aggregate_stats();
        assert_eq!(stats.total_runs(), 580);
        assert!((stats.total_wall_hours() - 2499.8).abs() < 1e-6);
        assert!((stats.mean_run_hours() - 4.31).abs() < 1e-9);
    }

    #[test]
    fn small_aggregates() {
        assert_eq!(StoreSnapshot::new().aggregate_stats().total_wall_hours(), 0.0);
        assert_eq!(StoreSnapshot::new().aggregate_stats().mean_run_hours(), 0.0);
        let mut s = StoreSnapshot::new();
        s.append_ledger(entry(3.917, t0()));
        s.append_ledger(entry(3.917, t0()));
        assert!((s.aggregate_stats().total_wall_hours() - 7.834).abs() < 1e-9);
        let mut exact = StoreSnapshot::new();
        let cutoff = Duration::from_secs(3 * 3600 + 55 * 60);
        exact.append_ledger(RunLedgerEntry::run(t0(), cutoff));
        exact.append_ledger(RunLedgerEntry::run(t0(), cutoff));
        assert!((exact.aggregate_stats().total_wall_hours() - 47.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn heartbeats_are_not_runs() {
        let mut s = StoreSnapshot::new();
        s.record_heartbeat(t0());
        s.append_ledger(entry(1.0, t0()));
        let t = s.ledger_totals();
        assert_eq!((t.runs, t.heartbeats), (1, 1));
        assert_eq!(s.ledger()[0].run_id, 1);
        assert_eq!(s.ledger()[1].run_id, 2);
    }

    #[test]
    fn interrupted_save_keeps_previous_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.jsonl");
        let mut s = StoreSnapshot::new();
        s.upsert_discovered(&u("https://site.test/"), LinkClass::Page, t0());
        save(&s, &path).unwrap();
        let before = fs::read(&path).unwrap();
        let mut next = s.clone();
        next.append_ledger(entry(1.0, t0()));
        let err = save_with_hook(&next, &path, |_| Err(io::Error::other("power cut"))).unwrap_err();
        assert!(matches!(err, StoreError::IoFailure { .. }));
        assert_eq!(fs::read(&path).unwrap(), before);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "temp file left behind");
    }

    fn arb_time() -> impl Strategy<Value = DateTime<Utc>> {
        (0i64..4_000_000_000, 0u32..1_000_000_000)
            .prop_map(|(s, n)| DateTime::from_timestamp(s, n).unwrap())
    }

    fn arb_entry() -> impl Strategy<Value = RunLedgerEntry> {
        (arb_time(), 0u64..30_000_000, 0u64..30_000_000, 0u64..5000, 0u64..5000, any::<bool>()).prop_map(
            |(at, wall, budget, attempted, accepted, hb)| {
                if hb {
                    RunLedgerEntry::heartbeat(at)
                } else {
                    RunLedgerEntry {
                        wall_duration: Duration::from_millis(wall),
                        in_budget_duration: Duration::from_millis(budget),
                        attempted,
                        accepted: accepted.min(attempted),
                        errors: attempted - accepted.min(attempted),
                        stopped_by: "list_exhausted".into(),
                        ..RunLedgerEntry::run(at, Duration::ZERO)
                    }
                }
            },
        )
    }

    fn arb_snapshot() -> impl Strategy<Value = StoreSnapshot> {
        let record = (
            "[a-z0-9]{1,8}",
            proptest::option::of("[a-z0-9=]{1,6}"),
            prop_oneof![Just(LinkClass::Page), Just(LinkClass::Media)],
            arb_time(),
            0u64..80,
            proptest::option::of("[0-9a-f]{64}"),
            0u64..3,
        );
        (
            proptest::collection::vec(record, 0..12),
            proptest::collection::vec(arb_entry(), 0..12),
        )
            .prop_map(|(records, entries)| {
                let mut s = StoreSnapshot::new();
                for (path, query, class, at, count, digest, errs) in records {
                    let q = query.map(|q| format!("?{q}")).unwrap_or_default();
                    let url = u(&format!("https://site.test/{path}{q}"));
                    s.upsert_discovered(&url, class, at);
                    for _ in 0..count {
                        s.record_submission(&url, &accepted(), at).unwrap();
                    }
                    for _ in 0..errs {
                        s.record_submission(&url, &SubmissionOutcome::ServerError { status: 502 }, at)
                            .unwrap();
                    }
                    if let Some(d) = digest {
                        s.set_digest(&url, d).unwrap();
                    }
                }
                for e in entries {
                    s.append_ledger(e);
                }
                s
            })
    }

    proptest! {
        #[test]
        fn text_round_trip(s in arb_snapshot()) {
            let back = StoreSnapshot::from_lines(&s.to_lines(), Path::new("mem")).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn totals_are_additive(a in proptest::collection::vec(arb_entry(), 0..20),
                               b in proptest::collection::vec(arb_entry(), 0..20)) {
            let joined: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
            prop_assert_eq!(LedgerTotals::of(&joined), LedgerTotals::of(&a) + LedgerTotals::of(&b));
        }
    }
}
