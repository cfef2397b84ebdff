//! Shuffled, budget-bounded submission of a discovered set.
//!
//! The set is shuffled once per run, then submitted in that order. After every
//! submission the elapsed time is compared with the cutoff, so a run overshoots
//! its budget by at most one submission. Because runs only get through a prefix
//! of the shuffled list, shuffling is what spreads coverage evenly across runs;
//! [`coverage`] models that.

pub mod coverage;
pub mod lock;

use std::time::Duration;

use chrono::{DateTime, Utc};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{SubmissionOutcome, Submitter};
use crate::clock::Clock;
use crate::discovery::DiscoveredSet;
use crate::link::NormalizedUrl;

pub use coverage::{coverage_probability, simulate_coverage, CoverageParams, CoverageSimulation};

/// 3 h 55 m.
pub const DEFAULT_CUTOFF: Duration = Duration::from_secs(3 * 3600 + 55 * 60);
/// Longest single run the hosting platform allows.
pub const MAX_CUTOFF: Duration = Duration::from_secs(6 * 3600);
pub const DEFAULT_PACING: Duration = Duration::from_secs(5);
pub const DEFAULT_RUNS_PER_DAY: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("nothing to shuffle: the discovered set is empty")]
    EmptySet,
    #[error("cutoff {0:?} exceeds the six-hour run ceiling")]
    CutoffTooLong(Duration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunBudget {
    cutoff: Duration,
    started_at: DateTime<Utc>,
}

impl RunBudget {
    /// A zero cutoff is allowed: the run then stops after its first
    /// submission.
    pub fn new(cutoff: Duration, started_at: DateTime<Utc>) -> Result<Self, ScheduleError> {
        if cutoff > MAX_CUTOFF {
            return Err(ScheduleError::CutoffTooLong(cutoff));
        }
        Ok(Self { cutoff, started_at })
    }

    pub fn starting_now(cutoff: Duration, clock: &dyn Clock) -> Result<Self, ScheduleError> {
        Self::new(cutoff, clock.now())
    }

    pub fn cutoff(&self) -> Duration {
        self.cutoff
    }

    pub fn started_at(&self) -> DateTime<Utc> {
        self.started_at
    }

    pub fn is_exhausted(&self, now: DateTime<Utc>) -> bool {
        self.elapsed(now) >= self.cutoff
    }

    pub fn elapsed(&self, now: DateTime<Utc>) -> Duration {
        (now - self.started_at).to_std().unwrap_or(Duration::ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BudgetExhausted,
    ListExhausted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::BudgetExhausted => "budget_exhausted",
            StopReason::ListExhausted => "list_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSubmission {
    pub url: NormalizedUrl,
    pub outcome: SubmissionOutcome,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub attempted: usize,
    pub accepted: usize,
    pub connection_errors: usize,
    pub rate_limited: usize,
    /// Server errors, policy rejections and unexpected statuses.
    pub other_failures: usize,
    /// Proactive mode: entries fetched and found unchanged, so not submitted.
    pub unchanged: usize,
    /// Proactive mode: entries whose fetch failed.
    pub fetch_failures: usize,
    pub elapsed: Duration,
    pub stopped_by: StopReason,
    pub per_link: Vec<LinkSubmission>,
}

impl RunReport {
    pub fn new() -> Self {
        Self {
            attempted: 0,
            accepted: 0,
            connection_errors: 0,
            rate_limited: 0,
            other_failures: 0,
            unchanged: 0,
            fetch_failures: 0,
            elapsed: Duration::ZERO,
            stopped_by: StopReason::ListExhausted,
            per_link: Vec::new(),
        }
    }

    pub fn record(&mut self, url: NormalizedUrl, outcome: SubmissionOutcome, at: DateTime<Utc>) {
        self.attempted += 1;
        match &outcome {
            SubmissionOutcome::Accepted { .. } => self.accepted += 1,
            SubmissionOutcome::ConnectionError { .. } => self.connection_errors += 1,
            SubmissionOutcome::RateLimited { .. } => self.rate_limited += 1,
            _ => self.other_failures += 1,
        }
        self.per_link.push(LinkSubmission { url, outcome, at });
    }

    pub fn errors(&self) -> usize {
        self.attempted - self.accepted
    }
}

impl Default for RunReport {
    fn default() -> Self {
        Self::new()
    }
}

/// Uniform random order of the set's entries.
///
/// The same `rng_seed` always yields the same order; `None` draws a fresh
/// seed from the OS.
pub fn shuffle(set: &DiscoveredSet, rng_seed: Option<u64>) -> Result<Vec<NormalizedUrl>, ScheduleError> {
    if set.is_empty() {
        return Err(ScheduleError::EmptySet);
    }
    let mut links: Vec<NormalizedUrl> = set.urls().cloned().collect();
    shuffle_in_place(&mut links, rng_seed);
    Ok(links)
}

pub fn shuffle_in_place<T>(items: &mut [T], rng_seed: Option<u64>) {
    let mut rng = match rng_seed {
        Some(seed) => ChaCha8Rng::seed_from_u64(seed),
        None => ChaCha8Rng::from_entropy(),
    };
    items.shuffle(&mut rng);
}

/// Submits `links` in order until the list or the budget runs out.
///
/// Failures are recorded and the loop moves on. The budget is checked after
/// each submission; `pacing` is slept between submissions.
pub fn run_submissions<S, C>(
    links: &[NormalizedUrl],
    client: &mut S,
    budget: &RunBudget,
    clock: &C,
    pacing: Duration,
) -> RunReport
where
    S: Submitter + ?Sized,
    C: Clock + ?Sized,
{
    let mut report = RunReport::new();
    for (i, url) in links.iter().enumerate() {
        let at = clock.now();
        let outcome = client.submit(url);
        match &outcome {
            SubmissionOutcome::Accepted { .. } => info!("archived {url}"),
            other => warn!("{url}: {other}"),
        }
        report.record(url.clone(), outcome, at);
        if budget.is_exhausted(clock.now()) {
            report.stopped_by = StopReason::BudgetExhausted;
            break;
        }
        if i + 1 < links.len() {
            clock.sleep(pacing);
        }
    }
    report.elapsed = budget.elapsed(clock.now());
    report
}
