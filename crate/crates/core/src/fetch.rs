//! Page fetching.
//!
//! [`Fetcher`] is the seam between the crawler and the network. [`HttpFetcher`]
//! is the real implementation; [`PoliteFetcher`] adds the per-host delay; and
//! [`MemoryFetcher`] serves an in-memory site for tests and simulations.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, LOCATION};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::link::{normalize, NormalizedUrl};

pub const MAX_REDIRECTS: usize = 10;
pub const DEFAULT_FETCH_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_USER_AGENT: &str = concat!(
    "sitekeep/",
    env!("CARGO_PKG_VERSION"),
    " (website preservation crawler; +https://crates.io/crates/sitekeep-cli)"
);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub requested: NormalizedUrl,
    pub final_url: NormalizedUrl,
    pub status_code: u16,
    pub body: Vec<u8>,
    /// Each hop after `requested`, ending at `final_url`.
    pub redirect_chain: Vec<NormalizedUrl>,
    pub fetched_at: DateTime<Utc>,
}

impl FetchResult {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status_code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("connection error fetching {url}: {cause}")]
    Connection { url: String, cause: String },
    #[error("more than {MAX_REDIRECTS} redirects starting at {0}")]
    TooManyRedirects(String),
    #[error("unusable redirect from {from} to {location:?}")]
    BadRedirect { from: String, location: String },
}

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &NormalizedUrl) -> Result<FetchResult, FetchError>;
}

impl<F: Fetcher + ?Sized> Fetcher for &F {
    fn fetch(&self, url: &NormalizedUrl) -> Result<FetchResult, FetchError> {
        (**self).fetch(url)
    }
}

impl<F: Fetcher + ?Sized> Fetcher for Arc<F> {
    fn fetch(&self, url: &NormalizedUrl) -> Result<FetchResult, FetchError> {
        (**self).fetch(url)
    }
}

/// Blocking HTTP GET fetcher that follows redirects itself so the chain can
/// be recorded.
#[derive(Debug, Clone)]
pub struct HttpFetcher {
    client: Client,
}

impl HttpFetcher {
    pub fn new(user_agent: &str, timeout: Duration) -> Result<Self, FetchError> {
        let client = Client::builder()
            .user_agent(user_agent)
            .redirect(reqwest::redirect::Policy::none())
            .gzip(true)
            .timeout(timeout)
            .build()
            .map_err(|e| FetchError::Connection {
                url: String::new(),
                cause: e.to_string(),
            })?;
        Ok(Self { client })
    }
}

fn location(headers: &HeaderMap) -> Option<String> {
    headers
        .get(LOCATION)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &NormalizedUrl) -> Result<FetchResult, FetchError> {
        let mut current = url.clone();
        let mut chain = Vec::new();
        loop {
            let resp = self
                .client
                .get(current.to_string())
                .send()
                .map_err(|e| FetchError::Connection {
                    url: current.to_string(),
                    cause: e.to_string(),
                })?;
            let status = resp.status();
            if status.is_redirection() {
                if let Some(loc) = location(resp.headers()) {
                    if chain.len() == MAX_REDIRECTS {
                        return Err(FetchError::TooManyRedirects(url.to_string()));
                    }
                    let next = normalize(&loc, &current).map_err(|_| FetchError::BadRedirect {
                        from: current.to_string(),
                        location: loc.clone(),
                    })?;
                    chain.push(next.clone());
                    current = next;
                    continue;
                }
            }
            let body = resp
                .bytes()
                .map_err(|e| FetchError::Connection {
                    url: current.to_string(),
                    cause: e.to_string(),
                })?
                .to_vec();
            return Ok(FetchResult {
                requested: url.clone(),
                final_url: current,
                status_code: status.as_u16(),
                body,
                redirect_chain: chain,
                fetched_at: Utc::now(),
            });
        }
    }
}

/// Wraps a fetcher and keeps consecutive requests to one host at least
/// `delay` apart.
pub struct PoliteFetcher<F, C = SystemClock> {
    inner: F,
    clock: C,
    delay: Duration,
    last_request: Mutex<HashMap<String, DateTime<Utc>>>,
    host_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<F: Fetcher, C: Clock> PoliteFetcher<F, C> {
    pub fn new(inner: F, clock: C, delay: Duration) -> Self {
        Self {
            inner,
            clock,
            delay,
            last_request: Mutex::default(),
            host_locks: Mutex::default(),
        }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: Fetcher, C: Clock> Fetcher for PoliteFetcher<F, C> {
    fn fetch(&self, url: &NormalizedUrl) -> Result<FetchResult, FetchError> {
        let host = url.host().to_string();
        let host_lock = self
            .host_locks
            .lock()
            .unwrap()
            .entry(host.clone())
            .or_default()
            .clone();
        let _serial = host_lock.lock().unwrap();

        let last = self.last_request.lock().unwrap().get(&host).copied();
        if let Some(last) = last {
            let since = self.clock.elapsed_since(last);
            if since < self.delay {
                self.clock.sleep(self.delay - since);
            }
        }
        self.last_request
            .lock()
            .unwrap()
            .insert(host, self.clock.now());
        self.inner.fetch(url)
    }
}

#[derive(Debug, Clone)]
pub enum Route {
    Page { status: u16, body: Vec<u8> },
    Redirect(String),
    Unreachable,
}

#[derive(Default)]
struct MemorySite {
    routes: HashMap<NormalizedUrl, Route>,
    log: Vec<(NormalizedUrl, DateTime<Utc>)>,
}

/// In-memory site. Unknown URLs answer 404; every request is logged.
#[derive(Clone, Default)]
pub struct MemoryFetcher {
    site: Arc<Mutex<MemorySite>>,
    clock: Option<Arc<dyn Clock>>,
}

impl MemoryFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stamps log entries and results with `clock` instead of wall time.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn page(&self, url: &str, body: impl Into<Vec<u8>>) -> &Self {
        self.route(
            url,
            Route::Page {
                status: 200,
                body: body.into(),
            },
        )
    }

    pub fn route(&self, url: &str, route: Route) -> &Self {
        let url = NormalizedUrl::parse(url).expect("fixture url must parse");
        self.site.lock().unwrap().routes.insert(url, route);
        self
    }

    pub fn requests(&self) -> Vec<NormalizedUrl> {
        self.site
            .lock()
            .unwrap()
            .log
            .iter()
            .map(|(u, _)| u.clone())
            .collect()
    }

    pub fn request_log(&self) -> Vec<(NormalizedUrl, DateTime<Utc>)> {
        self.site.lock().unwrap().log.clone()
    }

    pub fn clear_log(&self) {
        self.site.lock().unwrap().log.clear();
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.as_ref().map_or_else(Utc::now, |c| c.now())
    }
}

impl Fetcher for MemoryFetcher {
    fn fetch(&self, url: &NormalizedUrl) -> Result<FetchResult, FetchError> {
        let now = self.now();
        let mut site = self.site.lock().unwrap();
        site.log.push((url.clone(), now));
        let mut current = url.clone();
        let mut chain = Vec::new();
        loop {
            match site.routes.get(&current).cloned() {
                Some(Route::Redirect(to)) => {
                    if chain.len() == MAX_REDIRECTS {
                        return Err(FetchError::TooManyRedirects(url.to_string()));
                    }
                    let next = normalize(&to, &current).map_err(|_| FetchError::BadRedirect {
                        from: current.to_string(),
                        location: to.clone(),
                    })?;
                    chain.push(next.clone());
                    current = next;
                }
                Some(Route::Unreachable) => {
                    return Err(FetchError::Connection {
                        url: current.to_string(),
                        cause: "connection refused".into(),
                    })
                }
                route => {
                    let (status, body) = match route {
                        Some(Route::Page { status, body }) => (status, body),
                        _ => (404, b"not found".to_vec()),
                    };
                    return Ok(FetchResult {
                        requested: url.clone(),
                        final_url: current,
                        status_code: status,
                        body,
                        redirect_chain: chain,
                        fetched_at: now,
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimulatedClock;

    fn u(s: &str) -> NormalizedUrl {
        NormalizedUrl::parse(s).unwrap()
    }

    #[test]
    fn memory_redirect_chain_recorded() {
        let site = MemoryFetcher::new();
        site.route("https://www.pisctehran.com/", Route::Redirect("https://peisctehran.com/".into()))
            .page("https://peisctehran.com/", "home");
        let r = site.fetch(&u("https://www.pisctehran.com/")).unwrap();
        assert_eq!(r.final_url, u("https://peisctehran.com/"));
        assert_eq!(r.redirect_chain, vec![u("https://peisctehran.com/")]);
        let direct = site.fetch(&u("https://peisctehran.com/")).unwrap();
        assert!(direct.redirect_chain.is_empty());
        assert_eq!(direct.requested, direct.final_url);
    }

    #[test]
    fn redirect_loop_is_bounded() {
        let site = MemoryFetcher::new();
        site.route("https://h/a", Route::Redirect("/b".into()))
            .route("https://h/b", Route::Redirect("/a".into()));
        assert!(matches!(
            site.fetch(&u("https://h/a")),
            Err(FetchError::TooManyRedirects(_))
        ));
    }

    #[test]
    fn unknown_is_404() {
        let site = MemoryFetcher::new();
        let r = site.fetch(&u("https://h/missing")).unwrap();
        assert_eq!(r.status_code, 404);
        assert!(!r.is_success());
    }

    #[test]
    fn polite_spacing_per_host() {
        let clock = Arc::new(SimulatedClock::default());
        let site = MemoryFetcher::new().with_clock(clock.clone());
        let polite = PoliteFetcher::new(site.clone(), clock.clone(), Duration::from_secs(2));
        for p in ["https://a/1", "https://b/1", "https://a/2", "https://a/3"] {
            polite.fetch(&u(p)).unwrap();
        }
        let log = site.request_log();
        let a: Vec<_> = log.iter().filter(|(u, _)| u.host() == "a").map(|(_, t)| *t).collect();
        for w in a.windows(2) {
            assert!((w[1] - w[0]).to_std().unwrap() >= Duration::from_secs(2));
        }
        // b did not wait for a.
        assert_eq!(log[1].1, log[0].1);
    }
}
