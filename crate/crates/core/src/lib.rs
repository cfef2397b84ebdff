//! Website preservation: crawl a site, push every URL to a web archive on a
//! schedule, and keep a ledger of what was sent.

pub mod archive;
pub mod change;
pub mod clock;
pub mod continuity;
pub mod discovery;
pub mod fetch;
pub mod link;
pub mod scheduler;
pub mod store;

pub use archive::{ArchiveClient, BackoffPolicy, SubmissionOutcome, Submitter, WithBackoff};
pub use change::{proactive_pass, ChangeDecision, DigestMode, ProactiveOptions};
pub use clock::{Clock, SimulatedClock, SystemClock};
pub use continuity::{check, ContinuityPolicy, ContinuityState, ContinuityStatus};
pub use discovery::{discover, discover_with, DiscoverOptions, DiscoveredSet, DiscoveryError, RobotsMode};
pub use fetch::{FetchError, FetchResult, Fetcher, HttpFetcher};
pub use link::{classify, normalize, CrawlPolicy, LinkClass, NormalizedUrl, UrlError};
pub use scheduler::{run_submissions, shuffle, RunBudget, RunReport, StopReason};
pub use store::{StoreError, StoreSnapshot, UrlRecord};
