//! Configuration: a flat `key = value` file, `SITEKEEP_*` environment
//! variables and command-line flags, resolved per key in the order
//! flag > environment > file > default.
//!
//! Lists are comma-separated. `volatile_patterns` is the exception: regexes
//! may contain commas, so the file takes one pattern per `volatile_patterns`
//! line and the environment variable takes one per line.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::time::Duration;

use sitekeep_core::archive::{BackoffPolicy, DEFAULT_ENDPOINT_BASE, DEFAULT_SUBMIT_TIMEOUT};
use sitekeep_core::change::{Canonicalizer, DEFAULT_VOLATILE_PATTERNS};
use sitekeep_core::continuity::ContinuityPolicy;
use sitekeep_core::discovery::{DiscoverOptions, RobotsMode};
use sitekeep_core::fetch::{DEFAULT_FETCH_TIMEOUT, DEFAULT_USER_AGENT};
use sitekeep_core::link::{
    CrawlPolicy, NormalizedUrl, DEFAULT_EXCLUDED_EXTENSIONS, DEFAULT_MAX_PAGES, DEFAULT_MEDIA_EXTENSIONS,
    DEFAULT_MEDIA_MARKERS,
};
use sitekeep_core::scheduler::{DEFAULT_CUTOFF, DEFAULT_PACING, MAX_CUTOFF};
use thiserror::Error;

pub const ENV_PREFIX: &str = "SITEKEEP_";

/// Every recognized key.
pub const KEYS: &[&str] = &[
    "seed_url",
    "internal_hosts",
    "endpoint_base",
    "cutoff",
    "pacing",
    "mode",
    "state_path",
    "lock_path",
    "rng_seed",
    "robots",
    "max_pages",
    "media_extensions",
    "excluded_extensions",
    "media_path_markers",
    "politeness_delay",
    "concurrency",
    "seed_attempts",
    "volatile_patterns",
    "expected_cadence",
    "warn_after",
    "platform_disable_after",
    "alarm_margin",
    "alert_file",
    "user_agent",
    "fetch_timeout",
    "submit_timeout",
    "backoff_attempts",
    "backoff_base_delay",
    "stale_lock_after",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{file}:{line}: {reason}")]
    Syntax { file: String, line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}` ({value:?}): {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("`{0}` is required for this command")]
    Missing(&'static str),
}

fn invalid(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Blind,
    Proactive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Blind => "blind",
            Mode::Proactive => "proactive",
        }
    }
}

/// One configuration source: key to value. For `volatile_patterns` the value
/// holds one pattern per line.
pub type Layer = BTreeMap<String, String>;

/// Parses the flat config file format. `#` starts a comment line.
pub fn parse_file(text: &str, name: &str) -> Result<Layer, ConfigError> {
    let mut layer = Layer::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                file: name.into(),
                line: i + 1,
                reason: "expected `key = value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.into()));
        }
        if key == "volatile_patterns" {
            let entry = layer.entry(key.into()).or_default();
            if !entry.is_empty() {
                entry.push('\n');
            }
            entry.push_str(value);
        } else {
            layer.insert(key.into(), value.into());
        }
    }
    Ok(layer)
}

/// Picks `SITEKEEP_<KEY>` variables out of an environment.
pub fn env_layer<I, K, V>(vars: I) -> Layer
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: Into<String>,
{
    let vars: HashMap<String, String> = vars
        .into_iter()
        .map(|(k, v)| (k.as_ref().to_string(), v.into()))
        .collect();
    KEYS.iter()
        .filter_map(|key| {
            vars.get(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase()))
                .map(|v| (key.to_string(), v.clone()))
        })
        .collect()
}

/// Per key, the value from the highest-precedence layer that has it.
pub fn merge(file: &Layer, env: &Layer, flags: &Layer) -> Layer {
    let mut out = file.clone();
    out.extend(env.iter().map(|(k, v)| (k.clone(), v.clone())));
    out.extend(flags.iter().map(|(k, v)| (k.clone(), v.clone())));
    out
}

#[derive(Debug, Clone)]
pub struct Config {
    pub seed_url: Option<NormalizedUrl>,
    pub internal_hosts: Vec<String>,
    pub endpoint_base: String,
    pub cutoff: Duration,
    pub pacing: Duration,
    pub mode: Mode,
    pub state_path: PathBuf,
    pub lock_path: PathBuf,
    pub rng_seed: Option<u64>,
    pub robots: RobotsMode,
    pub max_pages: usize,
    pub media_extensions: Vec<String>,
    pub excluded_extensions: Vec<String>,
    pub media_path_markers: Vec<String>,
    pub politeness_delay: Duration,
    pub concurrency: usize,
    pub seed_attempts: u32,
    pub volatile_patterns: Vec<String>,
    pub continuity: ContinuityPolicy,
    pub alert_file: Option<PathBuf>,
    pub user_agent: String,
    pub fetch_timeout: Duration,
    pub submit_timeout: Duration,
    pub backoff_attempts: u32,
    pub backoff_base_delay: Duration,
    pub stale_lock_after: Duration,
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn duration(key: &str, v: &str) -> Result<Duration, ConfigError> {
    humantime::parse_duration(v).map_err(|e| invalid(key, v, e))
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| invalid(key, v, e))
}

fn fmt_duration(d: Duration) -> String {
    humantime::format_duration(d).to_string()
}

impl Config {
    /// Builds and validates a config from merged key/value pairs; missing keys
    /// take their defaults.
    pub fn from_layer(values: &Layer) -> Result<Self, ConfigError> {
        if let Some(k) = values.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let get = |k: &str| values.get(k).map(String::as_str);

        let seed_url = get("seed_url")
            .map(|v| NormalizedUrl::parse(v).map_err(|e| invalid("seed_url", v, e)))
            .transpose()?;
        let internal_hosts = match get("internal_hosts") {
            Some(v) => list(v),
            None => seed_url.iter().map(|u| u.host().to_string()).collect(),
        };
        let endpoint_base = get("endpoint_base").unwrap_or(DEFAULT_ENDPOINT_BASE).to_string();
        NormalizedUrl::parse(&endpoint_base).map_err(|e| invalid("endpoint_base", &endpoint_base, e))?;
        let cutoff = get("cutoff").map_or(Ok(DEFAULT_CUTOFF), |v| duration("cutoff", v))?;
        if cutoff > MAX_CUTOFF {
            return Err(invalid(
                "cutoff",
                get("cutoff").unwrap_or_default(),
                "exceeds the six-hour run ceiling",
            ));
        }
        let mode = match get("mode") {
            None | Some("blind") => Mode::Blind,
            Some("proactive") => Mode::Proactive,
            Some(v) => return Err(invalid("mode", v, "expected blind or proactive")),
        };
        let state_path = PathBuf::from(get("state_path").unwrap_or("sitekeep-state.jsonl"));
        let lock_path = get("lock_path").map(PathBuf::from).unwrap_or_else(|| {
            let mut p = state_path.clone().into_os_string();
            p.push(".lock");
            p.into()
        });
        let robots = match get("robots") {
            None | Some("warn") => RobotsMode::Warn,
            Some("respect") => RobotsMode::Respect,
            Some("ignore") => RobotsMode::Ignore,
            Some(v) => return Err(invalid("robots", v, "expected ignore, warn or respect")),
        };
        let strs = |d: &[&str]| d.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let volatile_patterns = match get("volatile_patterns") {
            Some(v) => v.lines().map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
            None => strs(DEFAULT_VOLATILE_PATTERNS),
        };
        let expected_cadence = get("expected_cadence")
            .map_or(Ok(ContinuityPolicy::default().expected_cadence), |v| duration("expected_cadence", v))?;
        let defaults = ContinuityPolicy::default();
        let continuity = ContinuityPolicy {
            expected_cadence,
            warn_after: get("warn_after").map_or(Ok(3 * expected_cadence), |v| duration("warn_after", v))?,
            platform_disable_after: get("platform_disable_after")
                .map_or(Ok(defaults.platform_disable_after), |v| duration("platform_disable_after", v))?,
            alarm_margin: get("alarm_margin").map_or(Ok(defaults.alarm_margin), |v| duration("alarm_margin", v))?,
        };

        let config = Config {
            seed_url,
            internal_hosts,
            endpoint_base,
            cutoff,
            pacing: get("pacing").map_or(Ok(DEFAULT_PACING), |v| duration("pacing", v))?,
            mode,
            state_path,
            lock_path,
            rng_seed: get("rng_seed").map(|v| number("rng_seed", v)).transpose()?,
            robots,
            max_pages: get("max_pages").map_or(Ok(DEFAULT_MAX_PAGES), |v| number("max_pages", v))?,
            media_extensions: get("media_extensions").map_or_else(|| strs(DEFAULT_MEDIA_EXTENSIONS), list),
            excluded_extensions: get("excluded_extensions").map_or_else(|| strs(DEFAULT_EXCLUDED_EXTENSIONS), list),
            media_path_markers: get("media_path_markers").map_or_else(|| strs(DEFAULT_MEDIA_MARKERS), list),
            politeness_delay: get("politeness_delay")
                .map_or(Ok(Duration::from_secs(1)), |v| duration("politeness_delay", v))?,
            concurrency: get("concurrency").map_or(Ok(1), |v| number("concurrency", v))?,
            seed_attempts: get("seed_attempts").map_or(Ok(3), |v| number("seed_attempts", v))?,
            volatile_patterns,
            continuity,
            alert_file: get("alert_file").map(PathBuf::from),
            user_agent: get("user_agent").unwrap_or(DEFAULT_USER_AGENT).to_string(),
            fetch_timeout: get("fetch_timeout").map_or(Ok(DEFAULT_FETCH_TIMEOUT), |v| duration("fetch_timeout", v))?,
            submit_timeout: get("submit_timeout")
                .map_or(Ok(DEFAULT_SUBMIT_TIMEOUT), |v| duration("submit_timeout", v))?,
            backoff_attempts: get("backoff_attempts").map_or(Ok(3), |v| number("backoff_attempts", v))?,
            backoff_base_delay: get("backoff_base_delay")
                .map_or(Ok(Duration::from_secs(10)), |v| duration("backoff_base_delay", v))?,
            stale_lock_after: get("stale_lock_after")
                .map_or(Ok(Duration::from_secs(6 * 3600)), |v| duration("stale_lock_after", v))?,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &dyn std::fmt::Display| invalid(key, &self.value_of(key), reason);
        if self.concurrency == 0 {
            return Err(bad("concurrency", &"must be at least 1"));
        }
        if self.seed_attempts == 0 {
            return Err(bad("seed_attempts", &"must be at least 1"));
        }
        if self.seed_url.is_some() {
            self.crawl_policy().map_err(|e| bad("internal_hosts", &e))?;
        }
        CrawlPolicy::new(["placeholder.invalid"])
            .and_then(|p| p.with_media_extensions(&self.media_extensions))
            .and_then(|p| p.with_excluded_extensions(&self.excluded_extensions))
            .map_err(|e| bad("excluded_extensions", &e))?
            .with_max_pages(self.max_pages)
            .map_err(|e| bad("max_pages", &e))?;
        self.continuity.validate().map_err(|e| bad("warn_after", &e))?;
        self.backoff().validate().map_err(|e| bad("backoff_attempts", &e))?;
        Canonicalizer::new(&self.volatile_patterns).map_err(|e| bad("volatile_patterns", &e))?;
        Ok(())
    }

    pub fn require_seed(&self) -> Result<&NormalizedUrl, ConfigError> {
        self.seed_url.as_ref().ok_or(ConfigError::Missing("seed_url"))
    }

    pub fn crawl_policy(&self) -> Result<CrawlPolicy, sitekeep_core::link::PolicyError> {
        Ok(CrawlPolicy::new(&self.internal_hosts)?
            .with_media_extensions(&self.media_extensions)?
            .with_excluded_extensions(&self.excluded_extensions)?
            .with_max_pages(self.max_pages)?
            .with_media_markers(self.media_path_markers.clone())
            .with_politeness_delay(self.politeness_delay))
    }

    pub fn discover_options(&self) -> DiscoverOptions {
        DiscoverOptions {
            concurrency: self.concurrency,
            robots: self.robots,
            seed_attempts: self.seed_attempts,
        }
    }

    pub fn backoff(&self) -> BackoffPolicy {
        BackoffPolicy {
            max_attempts: self.backoff_attempts,
            base_delay: self.backoff_base_delay,
            ..BackoffPolicy::default()
        }
    }

    pub fn canonicalizer(&self) -> Canonicalizer {
        Canonicalizer::new(&self.volatile_patterns).expect("patterns validated on load")
    }

    /// The resolved value of `key`, in the same syntax the config file takes.
    pub fn value_of(&self, key: &str) -> String {
        let opt = |o: Option<String>| o.unwrap_or_default();
        match key {
            "seed_url" => opt(self.seed_url.as_ref().map(ToString::to_string)),
            "internal_hosts" => self.internal_hosts.join(","),
            "endpoint_base" => self.endpoint_base.clone(),
            "cutoff" => fmt_duration(self.cutoff),
            "pacing" => fmt_duration(self.pacing),
            "mode" => self.mode.as_str().into(),
            "state_path" => self.state_path.display().to_string(),
            "lock_path" => self.lock_path.display().to_string(),
            "rng_seed" => opt(self.rng_seed.map(|s| s.to_string())),
            "robots" => match self.robots {
                RobotsMode::Ignore => "ignore",
                RobotsMode::Warn => "warn",
                RobotsMode::Respect => "respect",
            }
            .into(),
            "max_pages" => self.max_pages.to_string(),
            "media_extensions" => self.media_extensions.join(","),
            "excluded_extensions" => self.excluded_extensions.join(","),
            "media_path_markers" => self.media_path_markers.join(","),
            "politeness_delay" => fmt_duration(self.politeness_delay),
            "concurrency" => self.concurrency.to_string(),
            "seed_attempts" => self.seed_attempts.to_string(),
            "volatile_patterns" => self.volatile_patterns.join("\n"),
            "expected_cadence" => fmt_duration(self.continuity.expected_cadence),
            "warn_after" => fmt_duration(self.continuity.warn_after),
            "platform_disable_after" => fmt_duration(self.continuity.platform_disable_after),
            "alarm_margin" => fmt_duration(self.continuity.alarm_margin),
            "alert_file" => opt(self.alert_file.as_ref().map(|p| p.display().to_string())),
            "user_agent" => self.user_agent.clone(),
            "fetch_timeout" => fmt_duration(self.fetch_timeout),
            "submit_timeout" => fmt_duration(self.submit_timeout),
            "backoff_attempts" => self.backoff_attempts.to_string(),
            "backoff_base_delay" => fmt_duration(self.backoff_base_delay),
            "stale_lock_after" => fmt_duration(self.stale_lock_after),
            _ => String::new(),
        }
    }
}
