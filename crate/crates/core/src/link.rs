//! URL canonicalization and link classification.
//!
//! Every link pulled out of a page passes through [`normalize`] before it is
//! compared, stored or submitted, so two spellings of the same target collapse
//! into one [`NormalizedUrl`]. [`classify`] then decides what the crawler does
//! with it.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use url::Url;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrlError {
    #[error("malformed url {raw:?}: {reason}")]
    MalformedUrl { raw: String, reason: String },
    #[error("unsupported scheme {scheme:?} in {raw:?}")]
    UnsupportedScheme { raw: String, scheme: String },
}

/// Canonical absolute http(s) URL without a fragment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedUrl {
    scheme: String,
    host: String,
    port: Option<u16>,
    path: String,
    query: Option<String>,
}

impl NormalizedUrl {
    /// Parses an absolute URL string.
    pub fn parse(raw: &str) -> Result<Self, UrlError> {
        let parsed = Url::parse(clean_raw(raw).as_ref()).map_err(|e| UrlError::MalformedUrl {
            raw: raw.to_string(),
            reason: e.to_string(),
        })?;
        Self::from_url(raw, parsed)
    }

    fn from_url(raw: &str, url: Url) -> Result<Self, UrlError> {
        let scheme = url.scheme().to_ascii_lowercase();
        if scheme != "http" && scheme != "https" {
            return Err(UrlError::UnsupportedScheme {
                raw: raw.to_string(),
                scheme,
            });
        }
        let host = match url.host_str() {
            Some(h) if !h.is_empty() => h.to_ascii_lowercase(),
            _ => {
                return Err(UrlError::MalformedUrl {
                    raw: raw.to_string(),
                    reason: "missing host".into(),
                })
            }
        };
        // `Url` already drops default ports and collapses dot segments.
        let path = match url.path() {
            "" => "/".to_string(),
            p => p.to_string(),
        };
        let query = url.query().filter(|q| !q.is_empty()).map(str::to_string);
        Ok(Self {
            scheme,
            host,
            port: url.port(),
            path,
            query,
        })
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn port(&self) -> Option<u16> {
        self.port
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn query(&self) -> Option<&str> {
        self.query.as_deref()
    }

    /// Lowercased suffix of the last path segment after its final `.`.
    pub fn extension(&self) -> Option<String> {
        let segment = self.path.rsplit('/').next().unwrap_or("");
        let (stem, ext) = segment.rsplit_once('.')?;
        if stem.is_empty() && ext.is_empty() {
            return None;
        }
        if ext.is_empty() {
            None
        } else {
            Some(ext.to_ascii_lowercase())
        }
    }

    /// `scheme://host[:port]` of this URL.
    pub fn origin(&self) -> String {
        match self.port {
            Some(p) => format!("{}://{}:{}", self.scheme, self.host, p),
            None => format!("{}://{}", self.scheme, self.host),
        }
    }

    pub fn to_url(&self) -> Url {
        Url::parse(&self.to_string()).expect("normalized url always reparses")
    }
}

impl fmt::Display for NormalizedUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.origin())?;
        f.write_str(&self.path)?;
        if let Some(q) = &self.query {
            write!(f, "?{q}")?;
        }
        Ok(())
    }
}

impl FromStr for NormalizedUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for NormalizedUrl {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NormalizedUrl {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn clean_raw(raw: &str) -> std::borrow::Cow<'_, str> {
    let trimmed = raw.trim();
    if trimmed.contains("&amp;") || trimmed.contains("&#038;") {
        trimmed.replace("&amp;", "&").replace("&#038;", "&").into()
    } else {
        trimmed.into()
    }
}

/// Resolves `raw` against the page it was found on and canonicalizes it.
pub fn normalize(raw: &str, base: &NormalizedUrl) -> Result<NormalizedUrl, UrlError> {
    let cleaned = clean_raw(raw);
    if cleaned.is_empty() {
        return Err(UrlError::MalformedUrl {
            raw: raw.to_string(),
            reason: "empty link".into(),
        });
    }
    if let Some((scheme, _)) = cleaned.split_once(':') {
        let scheme = scheme.to_ascii_lowercase();
        let looks_like_scheme = !scheme.is_empty()
            && scheme
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
        if looks_like_scheme && scheme != "http" && scheme != "https" {
            return Err(UrlError::UnsupportedScheme {
                raw: raw.to_string(),
                scheme,
            });
        }
    }
    let joined = base
        .to_url()
        .join(cleaned.as_ref())
        .map_err(|e| UrlError::MalformedUrl {
            raw: raw.to_string(),
            reason: e.to_string(),
        })?;
    NormalizedUrl::from_url(raw, joined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    Page,
    Media,
    ExcludedResource,
    External,
}

impl LinkClass {
    pub const ALL: [LinkClass; 4] = [
        LinkClass::Page,
        LinkClass::Media,
        LinkClass::ExcludedResource,
        LinkClass::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkClass::Page => "page",
            LinkClass::Media => "media",
            LinkClass::ExcludedResource => "excluded_resource",
            LinkClass::External => "external",
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("internal_hosts must not be empty")]
    NoInternalHosts,
    #[error("extension {0:?} is both media and excluded")]
    OverlappingExtensions(String),
    #[error("max_pages must be positive")]
    ZeroMaxPages,
}

/// What counts as "the site" and how its links are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlPolicy {
    internal_hosts: BTreeSet<String>,
    pub media_path_markers: Vec<String>,
    media_extensions: BTreeSet<String>,
    excluded_extensions: BTreeSet<String>,
    max_pages: usize,
    pub politeness_delay: Duration,
}

pub const DEFAULT_MAX_PAGES: usize = 50_000;
pub const DEFAULT_MEDIA_MARKERS: &[&str] = &["/wp-content/"];
pub const DEFAULT_MEDIA_EXTENSIONS: &[&str] = &[
    "jpg", "jpeg", "png", "gif", "webp", "pdf", "doc", "docx", "ppt", "pptx", "mp4",
];
pub const DEFAULT_EXCLUDED_EXTENSIONS: &[&str] = &["css", "js", "mjs", "map"];

fn lower_set<I, S>(items: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items
        .into_iter()
        .map(|s| s.as_ref().trim().trim_start_matches('.').to_ascii_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}

impl CrawlPolicy {
    /// Policy with default markers and extensions for the given hosts.
    pub fn new<I, S>(internal_hosts: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            internal_hosts: lower_set(internal_hosts),
            media_path_markers: DEFAULT_MEDIA_MARKERS.iter().map(|s| s.to_string()).collect(),
            media_extensions: lower_set(DEFAULT_MEDIA_EXTENSIONS),
            excluded_extensions: lower_set(DEFAULT_EXCLUDED_EXTENSIONS),
            max_pages: DEFAULT_MAX_PAGES,
            politeness_delay: Duration::from_secs(1),
        }
        .validated()
    }

    pub fn with_media_extensions<I, S>(mut self, exts: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.media_extensions = lower_set(exts);
        self.validated()
    }

    pub fn with_excluded_extensions<I, S>(mut self, exts: I) -> Result<Self, PolicyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.excluded_extensions = lower_set(exts);
        self.validated()
    }

    pub fn with_max_pages(mut self, max_pages: usize) -> Result<Self, PolicyError> {
        self.max_pages = max_pages;
        self.validated()
    }

    pub fn with_politeness_delay(mut self, delay: Duration) -> Self {
        self.politeness_delay = delay;
        self
    }

    pub fn with_media_markers<I, S>(mut self, markers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.media_path_markers = markers.into_iter().map(Into::into).collect();
        self
    }

    pub fn internal_hosts(&self) -> &BTreeSet<String> {
        &self.internal_hosts
    }

    pub fn media_extensions(&self) -> &BTreeSet<String> {
        &self.media_extensions
    }

    pub fn excluded_extensions(&self) -> &BTreeSet<String> {
        &self.excluded_extensions
    }

    pub fn max_pages(&self) -> usize {
        self.max_pages
    }

    fn validated(self) -> Result<Self, PolicyError> {
        if self.internal_hosts.is_empty() {
            return Err(PolicyError::NoInternalHosts);
        }
        if let Some(ext) = self.media_extensions.intersection(&self.excluded_extensions).next() {
            return Err(PolicyError::OverlappingExtensions(ext.clone()));
        }
        if self.max_pages == 0 {
            return Err(PolicyError::ZeroMaxPages);
        }
        Ok(self)
    }

    fn host_is_internal(&self, host: &str) -> bool {
        let bare = host.strip_prefix("www.").unwrap_or(host);
        self.internal_hosts
            .iter()
            .any(|h| h == host || h.strip_prefix("www.").unwrap_or(h) == bare)
    }
}

/// Sorts a URL into exactly one class.
///
/// Precedence: External > ExcludedResource > Media > Page.
pub fn classify(url: &NormalizedUrl, policy: &CrawlPolicy) -> LinkClass {
    if !policy.host_is_internal(url.host()) {
        return LinkClass::External;
    }
    let ext = url.extension();
    if let Some(ext) = &ext {
        if policy.excluded_extensions.contains(ext) {
            return LinkClass::ExcludedResource;
        }
    }
    let marked = policy
        .media_path_markers
        .iter()
        .any(|m| !m.is_empty() && url.path().contains(m.as_str()));
    let media_ext = ext.is_some_and(|e| policy.media_extensions.contains(&e));
    if marked || media_ext {
        LinkClass::Media
    } else {
        LinkClass::Page
    }
}

pub fn is_internal(url: &NormalizedUrl, policy: &CrawlPolicy) -> bool {
    classify(url, policy) != LinkClass::External
}
