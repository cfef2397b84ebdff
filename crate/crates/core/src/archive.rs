//! Save-endpoint client.
//!
//! A capture request is `GET {endpoint_base}/save/{url}` with the normalized
//! URL appended verbatim. Every response, and every transport failure, maps to
//! a [`SubmissionOutcome`] value; nothing here returns an error.

use std::fmt;
use std::time::Duration;

use chrono::{DateTime, Utc};
use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, CONTENT_LOCATION, LOCATION, RETRY_AFTER};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::fetch::DEFAULT_USER_AGENT;
use crate::link::NormalizedUrl;

pub const DEFAULT_ENDPOINT_BASE: &str = "https://web.archive.org";
pub const DEFAULT_SUBMIT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SubmissionOutcome {
    Accepted { snapshot_hint: Option<String> },
    RateLimited { retry_after: Option<Duration> },
    ServerError { status: u16 },
    ConnectionError { cause: String },
    RejectedByPolicy { status: u16 },
    /// Any status outside the mapped ranges (1xx, other 4xx).
    Unexpected { status: u16 },
}

impl SubmissionOutcome {
    /// Maps an HTTP response to an outcome.
    ///
    /// 2xx and 3xx are acceptances: the save form answers a finished capture
    /// with a redirect to the snapshot. The hint is `Content-Location`, else
    /// `Location`.
    pub fn from_response(status: u16, headers: &HeaderMap, now: DateTime<Utc>) -> Self {
        let header = |name| {
            headers
                .get(name)
                .and_then(|v: &reqwest::header::HeaderValue| v.to_str().ok())
                .map(str::to_string)
        };
        match status {
            200..=399 => SubmissionOutcome::Accepted {
                snapshot_hint: header(CONTENT_LOCATION).or_else(|| header(LOCATION)),
            },
            429 => SubmissionOutcome::RateLimited {
                retry_after: header(RETRY_AFTER).and_then(|v| parse_retry_after(&v, now)),
            },
            500..=599 => SubmissionOutcome::ServerError { status },
            401 | 403 | 404 | 451 => SubmissionOutcome::RejectedByPolicy { status },
            _ => SubmissionOutcome::Unexpected { status },
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, SubmissionOutcome::Accepted { .. })
    }

    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            SubmissionOutcome::RateLimited { .. } | SubmissionOutcome::ServerError { .. }
        )
    }

    /// Stable short name, used as the error-tally key in the store.
    pub fn kind(&self) -> &'static str {
        match self {
            SubmissionOutcome::Accepted { .. } => "accepted",
            SubmissionOutcome::RateLimited { .. } => "rate_limited",
            SubmissionOutcome::ServerError { .. } => "server_error",
            SubmissionOutcome::ConnectionError { .. } => "connection_error",
            SubmissionOutcome::RejectedByPolicy { .. } => "rejected_by_policy",
            SubmissionOutcome::Unexpected { .. } => "unexpected",
        }
    }
}

impl fmt::Display for SubmissionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubmissionOutcome::Accepted { snapshot_hint: Some(h) } => write!(f, "accepted ({h})"),
            SubmissionOutcome::Accepted { snapshot_hint: None } => f.write_str("accepted"),
            SubmissionOutcome::RateLimited { retry_after: Some(d) } => {
                write!(f, "rate limited (retry after {}s)", d.as_secs())
            }
            SubmissionOutcome::RateLimited { retry_after: None } => f.write_str("rate limited"),
            SubmissionOutcome::ServerError { status } => write!(f, "server error {status}"),
            SubmissionOutcome::ConnectionError { cause } => write!(f, "connection error: {cause}"),
            SubmissionOutcome::RejectedByPolicy { status } => write!(f, "rejected {status}"),
            SubmissionOutcome::Unexpected { status } => write!(f, "unexpected status {status}"),
        }
    }
}

/// `Retry-After` as delta-seconds or an HTTP date.
pub fn parse_retry_after(value: &str, now: DateTime<Utc>) -> Option<Duration> {
    let value = value.trim();
    if let Ok(secs) = value.parse::<u64>() {
        return Some(Duration::from_secs(secs));
    }
    let at = DateTime::parse_from_rfc2822(value).ok()?.with_timezone(&Utc);
    Some((at - now).to_std().unwrap_or(Duration::ZERO))
}

/// Anything that can take a capture request.
pub trait Submitter {
    fn submit(&mut self, url: &NormalizedUrl) -> SubmissionOutcome;
}

impl<S: Submitter + ?Sized> Submitter for &mut S {
    fn submit(&mut self, url: &NormalizedUrl) -> SubmissionOutcome {
        (**self).submit(url)
    }
}

impl<S: Submitter + ?Sized> Submitter for Box<S> {
    fn submit(&mut self, url: &NormalizedUrl) -> SubmissionOutcome {
        (**self).submit(url)
    }
}

/// Request URL for a capture of `url`.
pub fn save_request_url(endpoint_base: &str, url: &NormalizedUrl) -> String {
    format!("{}/save/{}", endpoint_base.trim_end_matches('/'), url)
}

pub struct ArchiveClient {
    client: Client,
    endpoint_base: String,
}

impl ArchiveClient {
    pub fn new(endpoint_base: &str) -> Result<Self, reqwest::Error> {
        Self::with_options(endpoint_base, DEFAULT_USER_AGENT, DEFAULT_SUBMIT_TIMEOUT)
    }

    pub fn with_options(
        endpoint_base: &str,
        user_agent: &str,
        timeout: Duration,
    ) -> Result<Self, reqwest::Error> {
        let client = Client::builder()
            .user_agent(user_agent)
            .redirect(reqwest::redirect::Policy::none())
            .timeout(timeout)
            .build()?;
        Ok(Self {
            client,
            endpoint_base: endpoint_base.trim_end_matches('/').to_string(),
        })
    }

    pub fn endpoint_base(&self) -> &str {
        &self.endpoint_base
    }
}

impl Submitter for ArchiveClient {
    fn submit(&mut self, url: &NormalizedUrl) -> SubmissionOutcome {
        let target = save_request_url(&self.endpoint_base, url);
        match self.client.get(&target).send() {
            Ok(resp) => {
                SubmissionOutcome::from_response(resp.status().as_u16(), resp.headers(), Utc::now())
            }
            Err(e) => SubmissionOutcome::ConnectionError {
                cause: error_chain(&e),
            },
        }
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    msg
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackoffPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub multiplier: f64,
    pub honor_retry_after: bool,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(10),
            multiplier: 2.0,
            honor_retry_after: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackoffError {
    #[error("max_attempts must be at least 1")]
    NoAttempts,
    #[error("multiplier must be a finite number >= 1")]
    BadMultiplier,
}

impl BackoffPolicy {
    pub fn validate(&self) -> Result<(), BackoffError> {
        if self.max_attempts == 0 {
            return Err(BackoffError::NoAttempts);
        }
        if !(self.multiplier.is_finite() && self.multiplier >= 1.0) {
            return Err(BackoffError::BadMultiplier);
        }
        Ok(())
    }

    /// Wait before attempt `attempt + 1`, given that attempt `attempt`
    /// (1-based) produced `outcome`.
    pub fn delay_after(&self, attempt: u32, outcome: &SubmissionOutcome) -> Duration {
        let exp = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let computed = Duration::try_from_secs_f64(self.base_delay.as_secs_f64() * exp)
            .unwrap_or(Duration::MAX);
        match outcome {
            SubmissionOutcome::RateLimited {
                retry_after: Some(ra),
            } if self.honor_retry_after => computed.max(*ra),
            _ => computed,
        }
    }
}

/// Submits, retrying rate limits and server errors per `policy`.
///
/// Connection errors and policy rejections are returned immediately.
pub fn submit_with_backoff<S, C>(
    submitter: &mut S,
    url: &NormalizedUrl,
    policy: &BackoffPolicy,
    clock: &C,
) -> SubmissionOutcome
where
    S: Submitter + ?Sized,
    C: Clock + ?Sized,
{
    let attempts = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        let outcome = submitter.submit(url);
        if !outcome.is_retryable() || attempt >= attempts {
            return outcome;
        }
        clock.sleep(policy.delay_after(attempt, &outcome));
        attempt += 1;
    }
}

/// A [`Submitter`] that applies [`submit_with_backoff`] to every call.
pub struct WithBackoff<S, C> {
    inner: S,
    policy: BackoffPolicy,
    clock: C,
}

impl<S: Submitter, C: Clock> WithBackoff<S, C> {
    pub fn new(inner: S, policy: BackoffPolicy, clock: C) -> Self {
        Self {
            inner,
            policy,
            clock,
        }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Submitter, C: Clock> Submitter for WithBackoff<S, C> {
    fn submit(&mut self, url: &NormalizedUrl) -> SubmissionOutcome {
        submit_with_backoff(&mut self.inner, url, &self.policy, &self.clock)
    }
}

/// Replays a fixed list of outcomes, then accepts everything. Optionally
/// advances a clock per call to model latency.
pub struct ScriptedSubmitter<C = crate::clock::SimulatedClock> {
    script: std::collections::VecDeque<SubmissionOutcome>,
    latency: Duration,
    clock: Option<C>,
    log: Vec<(NormalizedUrl, DateTime<Utc>)>,
}

impl ScriptedSubmitter {
    pub fn new<I: IntoIterator<Item = SubmissionOutcome>>(script: I) -> Self {
        Self {
            script: script.into_iter().collect(),
            latency: Duration::ZERO,
            clock: None,
            log: Vec::new(),
        }
    }

    pub fn accepting() -> Self {
        Self::new([])
    }
}

impl<C: Clock> ScriptedSubmitter<C> {
    pub fn with_latency<D: Clock>(self, clock: D, latency: Duration) -> ScriptedSubmitter<D> {
        ScriptedSubmitter {
            script: self.script,
            latency,
            clock: Some(clock),
            log: self.log,
        }
    }

    pub fn requests(&self) -> Vec<NormalizedUrl> {
        self.log.iter().map(|(u, _)| u.clone()).collect()
    }

    pub fn request_log(&self) -> &[(NormalizedUrl, DateTime<Utc>)] {
        &self.log
    }
}

impl<C: Clock> Submitter for ScriptedSubmitter<C> {
    fn submit(&mut self, url: &NormalizedUrl) -> SubmissionOutcome {
        let at = self.clock.as_ref().map_or_else(Utc::now, |c| c.now());
        self.log.push((url.clone(), at));
        if let Some(c) = &self.clock {
            c.sleep(self.latency);
        }
        self.script.pop_front().unwrap_or(SubmissionOutcome::Accepted {
            snapshot_hint: None,
        })
    }
}
