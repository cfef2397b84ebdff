//! Breadth-first internal link discovery.
//!
//! Starting from the seed, each page is fetched once and scanned for quoted
//! links. Media links go straight into the discovered set without being
//! fetched, page links are queued, stylesheets, scripts and external links are
//! dropped. A fetched page joins the set after its links have been handled.

mod extract;
pub mod robots;

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::{debug, warn};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::fetch::{FetchError, FetchResult, Fetcher, PoliteFetcher};
use crate::link::{classify, normalize, CrawlPolicy, LinkClass, NormalizedUrl};
pub use extract::extract_candidate_links;
use robots::RobotsRules;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("seed {seed} is not a page under the crawl policy (classified {class})")]
    SeedNotPage { seed: Box<NormalizedUrl>, class: LinkClass },
    #[error("seed {seed} unreachable after {attempts} attempt(s): {cause}")]
    SeedUnreachable {
        seed: Box<NormalizedUrl>,
        attempts: u32,
        cause: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RobotsMode {
    /// Do not fetch robots.txt.
    Ignore,
    /// Fetch it and log disallowed pages, but crawl them anyway.
    #[default]
    Warn,
    /// Skip disallowed pages.
    Respect,
}

#[derive(Debug, Clone)]
pub struct DiscoverOptions {
    /// Maximum in-flight fetches.
    pub concurrency: usize,
    pub robots: RobotsMode,
    pub seed_attempts: u32,
}

impl Default for DiscoverOptions {
    fn default() -> Self {
        Self {
            concurrency: 1,
            robots: RobotsMode::Warn,
            seed_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageFailure {
    pub url: NormalizedUrl,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedirectRecord {
    pub requested: NormalizedUrl,
    pub chain: Vec<NormalizedUrl>,
}

/// Insertion-ordered, duplicate-free set of archival targets.
#[derive(Debug, Clone)]
pub struct DiscoveredSet {
    seed: NormalizedUrl,
    entries: Vec<(NormalizedUrl, LinkClass)>,
    index: HashSet<NormalizedUrl>,
    pub discovered_at: DateTime<Utc>,
    /// Distinct stylesheet/script links seen and dropped.
    pub excluded: BTreeSet<NormalizedUrl>,
    /// Distinct off-site links seen and dropped.
    pub external: BTreeSet<NormalizedUrl>,
    pub failures: Vec<PageFailure>,
    pub redirects: Vec<RedirectRecord>,
    pub robots_disallowed: Vec<NormalizedUrl>,
    /// The page cap stopped discovery before the frontier was exhausted.
    pub truncated: bool,
    pub elapsed: Duration,
}

impl DiscoveredSet {
    pub fn new(seed: NormalizedUrl, discovered_at: DateTime<Utc>) -> Self {
        Self {
            seed,
            entries: Vec::new(),
            index: HashSet::new(),
            discovered_at,
            excluded: BTreeSet::new(),
            external: BTreeSet::new(),
            failures: Vec::new(),
            redirects: Vec::new(),
            robots_disallowed: Vec::new(),
            truncated: false,
            elapsed: Duration::ZERO,
        }
    }

    /// Builds a set from explicit entries, dropping duplicates and any
    /// excluded or external entries.
    pub fn from_entries<I>(seed: NormalizedUrl, entries: I, discovered_at: DateTime<Utc>) -> Self
    where
        I: IntoIterator<Item = (NormalizedUrl, LinkClass)>,
    {
        let mut set = Self::new(seed, discovered_at);
        for (url, class) in entries {
            set.insert(url, class);
        }
        set
    }

    /// Returns false if the url was already present or the class is not
    /// archivable.
    pub fn insert(&mut self, url: NormalizedUrl, class: LinkClass) -> bool {
        match class {
            LinkClass::ExcludedResource | LinkClass::External => false,
            _ if self.index.contains(&url) => false,
            _ => {
                self.index.insert(url.clone());
                self.entries.push((url, class));
                true
            }
        }
    }

    pub fn seed(&self) -> &NormalizedUrl {
        &self.seed
    }

    pub fn entries(&self) -> &[(NormalizedUrl, LinkClass)] {
        &self.entries
    }

    pub fn urls(&self) -> impl Iterator<Item = &NormalizedUrl> {
        self.entries.iter().map(|(u, _)| u)
    }

    pub fn contains(&self, url: &NormalizedUrl) -> bool {
        self.index.contains(url)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, class: LinkClass) -> usize {
        match class {
            LinkClass::ExcludedResource => self.excluded.len(),
            LinkClass::External => self.external.len(),
            _ => self.entries.iter().filter(|(_, c)| *c == class).count(),
        }
    }
}

/// Discovers with default options, the policy's politeness delay and wall time.
pub fn discover<F: Fetcher>(
    seed: &NormalizedUrl,
    fetcher: F,
    policy: &CrawlPolicy,
) -> Result<DiscoveredSet, DiscoveryError> {
    discover_with(seed, fetcher, policy, &DiscoverOptions::default(), &SystemClock)
}

pub fn discover_with<F: Fetcher>(
    seed: &NormalizedUrl,
    fetcher: F,
    policy: &CrawlPolicy,
    options: &DiscoverOptions,
    clock: &dyn Clock,
) -> Result<DiscoveredSet, DiscoveryError> {
    let seed_class = classify(seed, policy);
    if seed_class != LinkClass::Page {
        return Err(DiscoveryError::SeedNotPage {
            seed: Box::new(seed.clone()),
            class: seed_class,
        });
    }
    let started = clock.now();
    let fetcher = PoliteFetcher::new(fetcher, clock, policy.politeness_delay);
    let mut crawl = Crawl {
        policy,
        options,
        robots: None,
        set: DiscoveredSet::new(seed.clone(), started),
        queue: VecDeque::from([seed.clone()]),
        attempted: HashSet::new(),
        warned_robots: HashSet::new(),
    };

    if options.robots != RobotsMode::Ignore {
        crawl.robots = load_robots(&fetcher, seed);
    }

    let seed_result = fetch_seed(&fetcher, seed, options.seed_attempts.max(1))?;
    crawl.queue.pop_front();
    crawl.attempted.insert(seed.clone());
    crawl.process(seed.clone(), Ok(seed_result));

    let width = options.concurrency.max(1);
    while !crawl.queue.is_empty() && crawl.set.len() < policy.max_pages() {
        let batch = crawl.next_batch(width);
        if batch.is_empty() {
            continue;
        }
        let results: Vec<Result<FetchResult, FetchError>> = if batch.len() == 1 {
            vec![fetcher.fetch(&batch[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|u| {
                        let f = &fetcher;
                        s.spawn(move || f.fetch(u))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("fetch thread panicked"))
                    .collect()
            })
        };
        for (url, result) in batch.into_iter().zip(results) {
            if crawl.set.len() >= policy.max_pages() {
                crawl.set.truncated = true;
                break;
            }
            crawl.process(url, result);
        }
    }

    let Crawl {
        mut set,
        queue,
        attempted,
        ..
    } = crawl;
    if queue
        .iter()
        .any(|u| !set.contains(u) && !attempted.contains(u))
    {
        set.truncated = true;
    }
    set.elapsed = clock.elapsed_since(started);
    if set.truncated {
        warn!(
            "discovery stopped at the page cap of {} entries",
            policy.max_pages()
        );
    }
    Ok(set)
}

fn fetch_seed<F: Fetcher>(
    fetcher: &F,
    seed: &NormalizedUrl,
    attempts: u32,
) -> Result<FetchResult, DiscoveryError> {
    let mut cause = String::new();
    for attempt in 1..=attempts {
        match fetcher.fetch(seed) {
            Ok(r) if r.is_success() => return Ok(r),
            Ok(r) => cause = format!("HTTP {}", r.status_code),
            Err(e) => cause = e.to_string(),
        }
        debug!("seed attempt {attempt}/{attempts} failed: {cause}");
    }
    Err(DiscoveryError::SeedUnreachable {
        seed: Box::new(seed.clone()),
        attempts,
        cause,
    })
}

fn load_robots<F: Fetcher>(fetcher: &F, seed: &NormalizedUrl) -> Option<RobotsRules> {
    let robots_url = normalize("/robots.txt", seed).ok()?;
    match fetcher.fetch(&robots_url) {
        Ok(r) if r.is_success() => Some(RobotsRules::parse(&String::from_utf8_lossy(&r.body))),
        Ok(_) => None,
        Err(e) => {
            debug!("robots.txt unavailable: {e}");
            None
        }
    }
}

struct Crawl<'a> {
    policy: &'a CrawlPolicy,
    options: &'a DiscoverOptions,
    robots: Option<RobotsRules>,
    set: DiscoveredSet,
    queue: VecDeque<NormalizedUrl>,
    attempted: HashSet<NormalizedUrl>,
    warned_robots: HashSet<NormalizedUrl>,
}

impl Crawl<'_> {
    fn next_batch(&mut self, width: usize) -> Vec<NormalizedUrl> {
        let mut batch = Vec::with_capacity(width);
        while batch.len() < width {
            let Some(u) = self.queue.pop_front() else { break };
            if self.set.contains(&u) || self.attempted.contains(&u) {
                continue;
            }
            self.attempted.insert(u.clone());
            batch.push(u);
        }
        batch
    }

    fn process(&mut self, url: NormalizedUrl, result: Result<FetchResult, FetchError>) {
        let page = match result {
            Ok(page) => page,
            Err(e) => {
                warn!("skipping {url}: {e}");
                self.set.failures.push(PageFailure {
                    url,
                    cause: e.to_string(),
                });
                return;
            }
        };
        if !page.redirect_chain.is_empty() {
            self.set.redirects.push(RedirectRecord {
                requested: url.clone(),
                chain: page.redirect_chain.clone(),
            });
        }
        match classify(&page.final_url, self.policy) {
            LinkClass::External => {
                debug!("{url} redirects off-site to {}", page.final_url);
                self.set.insert(url, LinkClass::Page);
                return;
            }
            LinkClass::Page if page.final_url != url => self.consider_page(page.final_url.clone()),
            _ => {}
        }
        if !page.is_success() {
            warn!("skipping {url}: HTTP {}", page.status_code);
            self.set.failures.push(PageFailure {
                url,
                cause: format!("HTTP {}", page.status_code),
            });
            return;
        }
        for raw in extract_candidate_links(&page.body) {
            let link = match normalize(&raw, &page.final_url) {
                Ok(link) => link,
                Err(e) => {
                    debug!("ignoring {raw:?} on {url}: {e}");
                    continue;
                }
            };
            match classify(&link, self.policy) {
                LinkClass::Media => {
                    if self.set.contains(&link) {
                        continue;
                    }
                    // One slot stays reserved for the page being processed.
                    if self.set.len() + 1 < self.policy.max_pages() {
                        self.set.insert(link, LinkClass::Media);
                    } else {
                        self.set.truncated = true;
                    }
                }
                LinkClass::Page => self.consider_page(link),
                LinkClass::ExcludedResource => {
                    self.set.excluded.insert(link);
                }
                LinkClass::External => {
                    self.set.external.insert(link);
                }
            }
        }
        self.set.insert(url, LinkClass::Page);
    }

    fn consider_page(&mut self, link: NormalizedUrl) {
        if self.set.contains(&link) || self.attempted.contains(&link) {
            return;
        }
        if let Some(robots) = &self.robots {
            let target = match link.query() {
                Some(q) => format!("{}?{q}", link.path()),
                None => link.path().to_string(),
            };
            if link.host() == self.set.seed().host() && robots.is_disallowed(&target) {
                if self.warned_robots.insert(link.clone()) {
                    warn!("robots.txt disallows {link}");
                    self.set.robots_disallowed.push(link.clone());
                }
                if self.options.robots == RobotsMode::Respect {
                    return;
                }
            }
        }
        self.queue.push_back(link);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimulatedClock;
    use crate::fetch::{MemoryFetcher, Route};
    use std::sync::Arc;

    fn u(s: &str) -> NormalizedUrl {
        NormalizedUrl::parse(s).unwrap()
    }

    fn policy() -> CrawlPolicy {
        CrawlPolicy::new(["site.test"])
            .unwrap()
            .with_politeness_delay(Duration::ZERO)
    }

    fn quiet() -> DiscoverOptions {
        DiscoverOptions {
            robots: RobotsMode::Ignore,
            ..Default::default()
        }
    }

    fn run(site: &MemoryFetcher, policy: &CrawlPolicy, opts: &DiscoverOptions) -> DiscoveredSet {
        discover_with(&u("https://site.test/"), site, policy, opts, &SimulatedClock::default()).unwrap()
    }

    #[test]
    fn singleton_when_seed_has_no_links() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/", "<p>nothing</p>");
        let set = run(&site, &policy(), &quiet());
        assert_eq!(set.urls().cloned().collect::<Vec<_>>(), vec![u("https://site.test/")]);
        assert!(!set.truncated);
    }

    #[test]
    fn media_added_without_fetch() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/", r#"<a href="/a">A</a>"#)
            .page("https://site.test/a", r#"<img src="/wp-content/m.jpg">"#);
        let set = run(&site, &policy(), &quiet());
        assert_eq!(
            site.requests(),
            vec![u("https://site.test/"), u("https://site.test/a")]
        );
        let got: BTreeSet<_> = set.urls().cloned().collect();
        let want: BTreeSet<_> = ["https://site.test/", "https://site.test/a", "https://site.test/wp-content/m.jpg"]
            .into_iter()
            .map(u)
            .collect();
        assert_eq!(got, want);
        // a's media link is processed before a itself is added.
        assert_eq!(set.entries()[1].1, LinkClass::Media);
    }

    #[test]
    fn seed_unreachable_is_fatal() {
        let site = MemoryFetcher::new();
        site.route("https://site.test/", Route::Unreachable);
        let err = discover_with(
            &u("https://site.test/"),
            &site,
            &policy(),
            &quiet(),
            &SimulatedClock::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DiscoveryError::SeedUnreachable { attempts: 3, .. }));
        assert_eq!(site.requests().len(), 3);
    }

    #[test]
    fn seed_must_be_page() {
        let site = MemoryFetcher::new();
        let err = discover_with(
            &u("https://site.test/a.css"),
            &site,
            &policy(),
            &quiet(),
            &SimulatedClock::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DiscoveryError::SeedNotPage { .. }));
    }

    #[test]
    fn page_failures_are_skipped() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/", r#""/down" "/gone" "/ok""#)
            .route("https://site.test/down", Route::Unreachable)
            .page("https://site.test/ok", "fine");
        let set = run(&site, &policy(), &quiet());
        assert_eq!(set.len(), 2);
        assert_eq!(set.failures.len(), 2);
        assert!(set.failures.iter().any(|f| f.cause == "HTTP 404"));
    }

    #[test]
    fn each_page_fetched_once() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/", r#""/a" "/b" "/a""#)
            .page("https://site.test/a", r#""/b" "/" "/a""#)
            .page("https://site.test/b", r#""/a" "/""#);
        run(&site, &policy(), &quiet());
        let reqs = site.requests();
        let distinct: HashSet<_> = reqs.iter().collect();
        assert_eq!(reqs.len(), distinct.len());
        assert_eq!(reqs.len(), 3);
    }

    #[test]
    fn redirect_chain_recorded_and_external_redirect_terminates() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/", r#""/old" "/away""#)
            .route("https://site.test/old", Route::Redirect("/new".into()))
            .page("https://site.test/new", r#""/deep""#)
            .page("https://site.test/deep", "")
            .route("https://site.test/away", Route::Redirect("https://elsewhere.test/".into()))
            .page("https://elsewhere.test/", r#""/never""#);
        let set = run(&site, &policy(), &quiet());
        assert!(set.contains(&u("https://site.test/old")));
        assert!(set.contains(&u("https://site.test/new")));
        assert!(set.contains(&u("https://site.test/deep")));
        assert!(set.contains(&u("https://site.test/away")));
        assert_eq!(set.redirects.len(), 2);
        assert!(!site.requests().contains(&u("https://elsewhere.test/never")));
        assert!(!set.contains(&u("https://site.test/never")));
    }

    #[test]
    fn cap_of_one_keeps_seed() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/", r#""/a" "/wp-content/x.png""#)
            .page("https://site.test/a", "");
        let set = run(&site, &policy().with_max_pages(1).unwrap(), &quiet());
        assert_eq!(set.urls().cloned().collect::<Vec<_>>(), vec![u("https://site.test/")]);
        assert!(set.truncated);
    }

    #[test]
    fn robots_warn_and_respect() {
        let site = MemoryFetcher::new();
        site.page("https://site.test/robots.txt", "User-agent: *\nDisallow: /private\n")
            .page("https://site.test/", r#""/private/a" "/public""#)
            .page("https://site.test/private/a", "")
            .page("https://site.test/public", "");
        let warn = run(&site, &policy(), &DiscoverOptions::default());
        assert_eq!(warn.robots_disallowed, vec![u("https://site.test/private/a")]);
        assert!(warn.contains(&u("https://site.test/private/a")));

        let respect = run(
            &site,
            &policy(),
            &DiscoverOptions {
                robots: RobotsMode::Respect,
                ..Default::default()
            },
        );
        assert!(!respect.contains(&u("https://site.test/private/a")));
        assert!(respect.contains(&u("https://site.test/public")));
    }

    #[test]
    fn politeness_delay_between_same_host_requests() {
        let clock = Arc::new(SimulatedClock::default());
        let site = MemoryFetcher::new().with_clock(clock.clone());
        site.page("https://site.test/", r#""/a" "/b" "/c""#)
            .page("https://site.test/a", "")
            .page("https://site.test/b", "")
            .page("https://site.test/c", "");
        let delay = Duration::from_millis(1500);
        let set = discover_with(
            &u("https://site.test/"),
            &site,
            &policy().with_politeness_delay(delay),
            &quiet(),
            clock.as_ref(),
        )
        .unwrap();
        let log = site.request_log();
        assert_eq!(log.len(), 4);
        for w in log.windows(2) {
            assert!((w[1].1 - w[0].1).to_std().unwrap() >= delay);
        }
        assert_eq!(set.elapsed, delay * 3);
    }
}
