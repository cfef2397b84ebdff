//! Run lock: keeps two mutating invocations from overlapping.
//!
//! The lock is a file created with `O_EXCL` holding the owner's pid and
//! acquisition time. A lock older than `stale_after` is assumed to belong to a
//! crashed run and is taken over.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LockError {
    #[error("another run holds {path} (pid {pid}, since {since})")]
    AlreadyRunning {
        path: PathBuf,
        pid: u32,
        since: DateTime<Utc>,
    },
    #[error("lock file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LockBody {
    pid: u32,
    acquired_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(path: &Path, now: DateTime<Utc>, stale_after: Duration) -> Result<Self, LockError> {
        let io_err = |source| LockError::Io {
            path: path.to_path_buf(),
            source,
        };
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    let body = LockBody {
                        pid: std::process::id(),
                        acquired_at: now,
                    };
                    let line = serde_json::to_string(&body).expect("lock body serializes");
                    f.write_all(line.as_bytes()).map_err(io_err)?;
                    f.sync_all().map_err(io_err)?;
                    return Ok(Self {
                        path: path.to_path_buf(),
                    });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(path)
                        .ok()
                        .and_then(|s| serde_json::from_str::<LockBody>(&s).ok());
                    let stale = match &holder {
                        Some(h) => (now - h.acquired_at).to_std().is_ok_and(|age| age >= stale_after),
                        // Unreadable or half-written: treat as stale.
                        None => true,
                    };
                    if stale {
                        warn!("taking over stale lock {}", path.display());
                        match fs::remove_file(path) {
                            Ok(()) => continue,
                            Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                            Err(e) => return Err(io_err(e)),
                        }
                    }
                    let h = holder.expect("non-stale lock has a holder");
                    return Err(LockError::AlreadyRunning {
                        path: path.to_path_buf(),
                        pid: h.pid,
                        since: h.acquired_at,
                    });
                }
                Err(e) => return Err(io_err(e)),
            }
        }
        Err(io_err(io::Error::new(
            io::ErrorKind::WouldBlock,
            "lock changed hands while acquiring",
        )))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
