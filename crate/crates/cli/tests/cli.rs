use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use chrono::Utc;
use serde_json::Value;
use sitekeep_core::store::{self, RunLedgerEntry, StoreSnapshot};
use sitekeep_testkit::site::micro_site;
use sitekeep_testkit::{unreachable_addr, FixtureServer};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Out {
    fn summary(&self) -> Value {
        let last = self.stdout.lines().last().expect("some output");
        serde_json::from_str(last).unwrap_or_else(|e| panic!("last line {last:?} is not JSON: {e}"))
    }
}

fn sitekeep(dir: &Path, args: &[&str]) -> Out {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sitekeep"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("SITEKEEP_")) {
        cmd.env_remove(k);
    }
    let out = cmd
        .current_dir(dir)
        .args(args)
        .env("NO_PROXY", "*")
        .output()
        .expect("binary runs");
    Out {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// A temp dir with `site.conf` pointing at `srv` for both the site and the
/// archive endpoint, with all delays zeroed.
fn setup(srv: &FixtureServer, extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("site.conf");
    std::fs::write(
        &conf,
        format!(
            "seed_url = {}\ninternal_hosts = 127.0.0.1\nendpoint_base = {}\npacing = 0s\npoliteness_delay = 0s\n\
             state_path = state.jsonl\nrng_seed = 7\n{extra}",
            srv.url("/"),
            srv.base_url()
        ),
    )
    .unwrap();
    (dir, conf)
}

fn site() -> FixtureServer {
    let srv = FixtureServer::start();
    srv.serve_site(&micro_site());
    srv
}

#[test]
fn discover_prints_class_counts() {
    let srv = site();
    let (dir, conf) = setup(&srv, "");
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "discover"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("pages: 6, media: 3, excluded: 2"), "{}", out.stdout);
    let db = store::load(&dir.path().join("state.jsonl")).unwrap();
    assert_eq!(db.records().count(), 9);
    assert!(srv.save_requests().is_empty());
}

#[test]
fn discover_with_page_cap_warns() {
    let srv = site();
    let (dir, conf) = setup(&srv, "max_pages = 1\n");
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "--json", "discover"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("pages: 1, media: 0"), "{}", out.stdout);
    assert!(out.stderr.contains("truncated"), "{}", out.stderr);
    assert_eq!(out.summary()["truncated"], true);
}

#[test]
fn unreachable_seed_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let seed = format!("http://{}/", unreachable_addr());
    let out = sitekeep(dir.path(), &["--state", "s.jsonl", "discover"]);
    assert_eq!(out.code, 4, "missing seed is a usage error");
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, format!("seed_url = {seed}\npoliteness_delay = 0s\n")).unwrap();
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "run"]);
    assert_eq!(out.code, 5, "{}", out.stderr);
    assert!(out.stderr.contains("unreachable"), "{}", out.stderr);
}

#[test]
fn full_run_submits_every_link() {
    let srv = site();
    let (dir, conf) = setup(&srv, "");
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "--json", "run"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("attempted: 9, accepted: 9"), "{}", out.stdout);
    let s = out.summary();
    assert_eq!(s["schema"], "sitekeep.summary.v1");
    assert_eq!(s["command"], "run");
    assert_eq!(s["attempted"], 9);
    assert_eq!(s["stopped_by"], "list_exhausted");

    let saves = srv.save_requests();
    assert_eq!(saves.len(), 9);
    assert!(saves.iter().all(|t| !t.contains("style.css") && !t.contains("app.js") && !t.contains("external")));
    let db = store::load(&dir.path().join("state.jsonl")).unwrap();
    assert!(db.records().all(|r| r.submit_count == 1));
    assert_eq!(db.ledger().len(), 1);
    assert_eq!(db.ledger()[0].accepted, 9);
}

#[test]
fn zero_cutoff_submits_once() {
    let srv = site();
    let (dir, conf) = setup(&srv, "");
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "--cutoff", "0s", "run"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("attempted: 1,"), "{}", out.stdout);
    assert!(out.stdout.contains("stopped by: budget_exhausted"), "{}", out.stdout);
    assert_eq!(srv.save_requests().len(), 1);
}

#[test]
fn second_invocation_is_locked_out() {
    let srv = site();
    let (dir, conf) = setup(&srv, "");
    let lock = dir.path().join("state.jsonl.lock");
    std::fs::write(
        &lock,
        format!(r#"{{"pid":1,"acquired_at":"{}"}}"#, Utc::now().to_rfc3339()),
    )
    .unwrap();
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "run"]);
    assert_eq!(out.code, 6, "{}", out.stderr);
    assert!(!dir.path().join("state.jsonl").exists());
    assert!(srv.requests().is_empty());
    assert!(lock.exists(), "someone else's lock must not be removed");
}

#[test]
fn proactive_second_run_submits_nothing() {
    let srv = site();
    let (dir, conf) = setup(&srv, "mode = proactive\n");
    let c = conf.to_str().unwrap();
    let first = sitekeep(dir.path(), &["--config", c, "--json", "run"]);
    assert_eq!(first.code, 0, "{}", first.stderr);
    assert_eq!(first.summary()["attempted"], 9);
    let second = sitekeep(dir.path(), &["--config", c, "--json", "run"]);
    assert_eq!(second.summary()["attempted"], 0, "{}", second.stdout);
    assert_eq!(second.summary()["unchanged"], 9);
    // Flag beats file.
    let blind = sitekeep(dir.path(), &["--config", c, "--mode", "blind", "--json", "run"]);
    assert_eq!(blind.summary()["attempted"], 9);
}

#[test]
fn status_on_empty_store_is_lapsed() {
    let srv = site();
    let (dir, conf) = setup(&srv, "alert_file = alerts.log\n");
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "--json", "status"]);
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert!(out.stdout.contains("runs: 0"));
    assert!(out.stdout.contains("total hours: 0.0"));
    let s = out.summary();
    assert_eq!(s["continuity"]["status"], "lapsed");
    assert_eq!(s["exit_code"], 3);
    assert!(out.stderr.contains("\"lapsed\""), "{}", out.stderr);
    let alerts = std::fs::read_to_string(dir.path().join("alerts.log")).unwrap();
    assert!(alerts.contains("\"status\":\"lapsed\""));
    assert!(srv.requests().is_empty(), "status touched the network");
}

#[test]
fn status_reports_ledger_hours() {
    let srv = site();
    let (dir, conf) = setup(&srv, "");
    let mut db = StoreSnapshot::new();
    let now = Utc::now();
    for i in (1..=580).rev() {
        db.append_ledger(RunLedgerEntry::run(
            now - chrono::Duration::hours(4 * i),
            Duration::from_secs_f64(4.31 * 3600.0),
        ));
    }
    store::save(&db, &dir.path().join("state.jsonl")).unwrap();
    let out = sitekeep(dir.path(), &["--config", conf.to_str().unwrap(), "status"]);
    assert_eq!(out.code, 0, "{}{}", out.stdout, out.stderr);
    assert!(out.stdout.contains("total hours: 2499.8"), "{}", out.stdout);
    assert!(out.stdout.contains("runs: 580"));
    assert!(srv.requests().is_empty());
}

#[test]
fn heartbeat_makes_status_healthy() {
    let dir = tempfile::tempdir().unwrap();
    let hb = sitekeep(dir.path(), &["--state", "s.jsonl", "heartbeat"]);
    assert_eq!(hb.code, 0, "{}", hb.stderr);
    let st = sitekeep(dir.path(), &["--state", "s.jsonl", "--json", "status"]);
    assert_eq!(st.code, 0, "{}", st.stderr);
    assert_eq!(st.summary()["heartbeats"], 1);
    assert_eq!(st.summary()["continuity"]["status"], "healthy");
}

#[test]
fn corrupt_store_exits_7() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.jsonl"), "{\"kind\":\"header\",\"schema_version\":1}\n{trunc").unwrap();
    let out = sitekeep(dir.path(), &["--state", "s.jsonl", "status"]);
    assert_eq!(out.code, 7, "{}", out.stderr);
    assert!(out.stderr.contains("line 2"), "{}", out.stderr);
}

#[test]
fn simulate_matches_analytic_without_network() {
    let srv = site();
    let (dir, conf) = setup(&srv, "");
    let out = sitekeep(
        dir.path(),
        &["--config", conf.to_str().unwrap(), "--seed-rng", "3", "--json", "simulate"],
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("0.953344"), "{}", out.stdout);
    let s = out.summary();
    assert!(s["max_deviation"].as_f64().unwrap() <= 0.02);
    assert_eq!(s["fixed"]["min"], 0.0);
    assert!(srv.requests().is_empty());
}

#[test]
fn usage_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sitekeep(dir.path(), &["--bogus", "status"]).code, 4);
    assert_eq!(sitekeep(dir.path(), &["frobnicate"]).code, 4);
    assert_eq!(sitekeep(dir.path(), &["--cutoff", "7h", "status"]).code, 4);
    assert_eq!(sitekeep(dir.path(), &["--mode", "eager", "status"]).code, 4);
    assert_eq!(sitekeep(dir.path(), &["simulate", "--links", "10", "--capacity", "11"]).code, 4);
    let help = sitekeep(dir.path(), &["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("simulate"));
}

#[test]
fn env_sits_between_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "state_path = from-file.jsonl\n").unwrap();
    let c = conf.to_str().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sitekeep"));
        cmd.current_dir(dir.path()).args(["--config", c]);
        if let Some(f) = flag {
            cmd.args(["--state", f]);
        }
        if let Some(e) = env {
            cmd.env("SITEKEEP_STATE_PATH", e);
        }
        assert!(cmd.arg("heartbeat").output().unwrap().status.success());
    };
    run(None, None);
    assert!(dir.path().join("from-file.jsonl").exists());
    run(Some("from-env.jsonl"), None);
    assert!(dir.path().join("from-env.jsonl").exists());
    run(Some("from-env.jsonl"), Some("from-flag.jsonl"));
    assert!(dir.path().join("from-flag.jsonl").exists());
}
