//! Change-triggered archiving.
//!
//! Instead of resubmitting every link on every run, a proactive pass fetches
//! each page, reduces it to a canonical digest and submits only pages that are
//! new or whose digest moved since the last accepted capture. Canonicalization
//! drops script/style bodies, whitespace layout, per-request tokens and timestamp metadata so that
//! a CMS rotating its nonces does not look like an edit.

use std::sync::OnceLock;
use std::time::Duration;

use log::{debug, info, warn};
use regex::Regex;
use sha2::{Digest, Sha256};

use crate::archive::Submitter;
use crate::clock::Clock;
use crate::discovery::DiscoveredSet;
use crate::fetch::Fetcher;
use crate::link::{LinkClass, NormalizedUrl};
use crate::scheduler::{shuffle_in_place, RunBudget, RunReport, StopReason};
use crate::store::StoreSnapshot;

/// Default volatile patterns: nonce attributes, CSRF tokens, WordPress
/// nonces in links, and modification-time meta tags.
pub const DEFAULT_VOLATILE_PATTERNS: &[&str] = &[
    r#"(?i)\b[\w-]*nonce\s*=\s*(?:"[^"]*"|'[^']*')"#,
    r#"(?i)<meta\b[^>]*\bname\s*=\s*["']csrf-(?:token|param)["'][^>]*>"#,
    r#"(?i)<input\b[^>]*\bname\s*=\s*["'](?:_wpnonce|_csrf|csrf_token|csrfmiddlewaretoken|authenticity_token)["'][^>]*>"#,
    r"(?i)\b_wpnonce=[0-9a-f]+",
    r#"(?i)<meta\b[^>]*(?:article:modified_time|article:published_time|og:updated_time|last-modified|http-equiv\s*=\s*["']date["']|name\s*=\s*["']date["'])[^>]*>"#,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigestMode {
    Raw,
    Canonicalized,
}

impl DigestMode {
    pub fn for_class(class: LinkClass) -> Self {
        match class {
            LinkClass::Page => DigestMode::Canonicalized,
            _ => DigestMode::Raw,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Canonicalizer {
    volatile: Vec<Regex>,
}

fn script_style() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)<script\b[^>]*>.*?</script\s*>|<style\b[^>]*>.*?</style\s*>").unwrap()
    })
}

fn whitespace() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+").unwrap())
}

fn inter_tag_space() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r">\s+<").unwrap())
}

impl Canonicalizer {
    pub fn new<I, S>(patterns: I) -> Result<Self, regex::Error>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let volatile = patterns
            .into_iter()
            .map(|p| Regex::new(p.as_ref()))
            .collect::<Result<_, _>>()?;
        Ok(Self { volatile })
    }

    pub fn canonicalize(&self, content: &[u8]) -> String {
        let text = String::from_utf8_lossy(content);
        let mut text = script_style().replace_all(&text, "").into_owned();
        for re in &self.volatile {
            if let std::borrow::Cow::Owned(replaced) = re.replace_all(&text, "") {
                text = replaced;
            }
        }
        let text = inter_tag_space().replace_all(text.trim(), "><");
        whitespace().replace_all(&text, " ").into_owned()
    }

    pub fn digest(&self, content: &[u8], mode: DigestMode) -> String {
        match mode {
            DigestMode::Raw => sha256_hex(content),
            DigestMode::Canonicalized => sha256_hex(self.canonicalize(content).as_bytes()),
        }
    }
}

impl Default for Canonicalizer {
    fn default() -> Self {
        Self::new(DEFAULT_VOLATILE_PATTERNS).expect("default patterns compile")
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest with the default volatile patterns.
pub fn digest(content: &[u8], mode: DigestMode) -> String {
    static DEFAULT: OnceLock<Canonicalizer> = OnceLock::new();
    DEFAULT.get_or_init(Canonicalizer::default).digest(content, mode)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChangeDecision {
    New,
    NoChange,
    Changed { old_digest: String, new_digest: String },
}

impl ChangeDecision {
    pub fn should_submit(&self) -> bool {
        !matches!(self, ChangeDecision::NoChange)
    }
}

pub fn decide(url: &NormalizedUrl, new_digest: &str, store: &StoreSnapshot) -> ChangeDecision {
    match store.record(url).and_then(|r| r.last_digest.as_deref()) {
        None => ChangeDecision::New,
        Some(old) if old == new_digest => ChangeDecision::NoChange,
        Some(old) => ChangeDecision::Changed {
            old_digest: old.to_string(),
            new_digest: new_digest.to_string(),
        },
    }
}

#[derive(Debug, Clone)]
pub struct ProactiveOptions {
    pub pacing: Duration,
    pub rng_seed: Option<u64>,
    pub canonicalizer: Canonicalizer,
}

impl Default for ProactiveOptions {
    fn default() -> Self {
        Self {
            pacing: crate::scheduler::DEFAULT_PACING,
            rng_seed: None,
            canonicalizer: Canonicalizer::default(),
        }
    }
}

enum Step {
    Unchanged,
    FetchFailed,
    /// Submit, then store the digest (pages only) if accepted.
    Submit(Option<String>),
}

/// One change-driven pass over `set`.
///
/// Pages are fetched in shuffled order and submitted only when new or
/// changed. Media is submitted until it has one accepted capture. A page's
/// stored digest moves only after an accepted submission, so a failed
/// submission is retried on the next pass. The budget is checked after every
/// entry and `pacing` is slept after every submission.
pub fn proactive_pass<F, S, C>(
    set: &DiscoveredSet,
    fetcher: &F,
    store: &mut StoreSnapshot,
    client: &mut S,
    budget: &RunBudget,
    clock: &C,
    options: &ProactiveOptions,
) -> RunReport
where
    F: Fetcher + ?Sized,
    S: Submitter + ?Sized,
    C: Clock + ?Sized,
{
    let mut report = RunReport::new();
    let mut order: Vec<(NormalizedUrl, LinkClass)> = set.entries().to_vec();
    let seen_at = clock.now();
    for (url, class) in &order {
        store.upsert_discovered(url, *class, seen_at);
    }
    shuffle_in_place(&mut order, options.rng_seed);

    for (i, (url, class)) in order.iter().enumerate() {
        let step = match class {
            LinkClass::Page => match fetcher.fetch(url) {
                Ok(page) if page.is_success() => {
                    let d = options.canonicalizer.digest(&page.body, DigestMode::Canonicalized);
                    match decide(url, &d, store) {
                        ChangeDecision::NoChange => Step::Unchanged,
                        decision => {
                            debug!("{url}: {decision:?}");
                            Step::Submit(Some(d))
                        }
                    }
                }
                Ok(page) => {
                    warn!("{url}: HTTP {}", page.status_code);
                    Step::FetchFailed
                }
                Err(e) => {
                    warn!("{e}");
                    Step::FetchFailed
                }
            },
            _ if store.record(url).is_some_and(|r| r.submit_count > 0) => Step::Unchanged,
            _ => Step::Submit(None),
        };

        let submitted = match step {
            Step::Unchanged => {
                report.unchanged += 1;
                false
            }
            Step::FetchFailed => {
                report.fetch_failures += 1;
                false
            }
            Step::Submit(new_digest) => {
                let at = clock.now();
                let outcome = client.submit(url);
                if outcome.is_accepted() {
                    info!("archived {url}");
                    if let Some(d) = new_digest {
                        store.set_digest(url, d).expect("record upserted above");
                    }
                } else {
                    warn!("{url}: {outcome}");
                }
                store
                    .record_submission(url, &outcome, at)
                    .expect("record upserted above");
                report.record(url.clone(), outcome, at);
                true
            }
        };

        if budget.is_exhausted(clock.now()) {
            report.stopped_by = StopReason::BudgetExhausted;
            break;
        }
        if submitted && i + 1 < order.len() {
            clock.sleep(options.pacing);
        }
    }
    report.elapsed = budget.elapsed(clock.now());
    report
}
