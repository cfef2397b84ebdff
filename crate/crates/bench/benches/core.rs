use std::time::Duration;

use chrono::DateTime;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use sitekeep_bench::{synthetic_page, synthetic_site, HOST};
use sitekeep_core::change::{Canonicalizer, DigestMode};
use sitekeep_core::clock::SimulatedClock;
use sitekeep_core::discovery::{discover_with, extract_candidate_links, DiscoverOptions, RobotsMode};
use sitekeep_core::link::{classify, normalize, CrawlPolicy, LinkClass, NormalizedUrl};
use sitekeep_core::scheduler::coverage::{simulate_coverage, CoverageParams};

fn links(c: &mut Criterion) {
    let page = synthetic_page(3, 400);
    let base = NormalizedUrl::parse(&format!("{HOST}/gallery/")).unwrap();
    let policy = CrawlPolicy::new(["bench.test"]).unwrap();
    let raw = extract_candidate_links(page.as_bytes());

    let mut g = c.benchmark_group("links");
    g.throughput(Throughput::Bytes(page.len() as u64));
    g.bench_function("extract", |b| b.iter(|| extract_candidate_links(black_box(page.as_bytes()))));
    g.throughput(Throughput::Elements(raw.len() as u64));
    g.bench_function("normalize_classify", |b| {
        b.iter(|| {
            raw.iter()
                .filter_map(|l| normalize(l, &base).ok())
                .filter(|u| classify(u, &policy) == LinkClass::Page)
                .count()
        })
    });
    g.finish();
}

fn digest(c: &mut Criterion) {
    let canon = Canonicalizer::default();
    let mut g = c.benchmark_group("digest");
    for n in [50, 500] {
        let page = synthetic_page(1, n);
        g.throughput(Throughput::Bytes(page.len() as u64));
        g.bench_with_input(BenchmarkId::new("raw", n), &page, |b, p| {
            b.iter(|| canon.digest(p.as_bytes(), DigestMode::Raw))
        });
        g.bench_with_input(BenchmarkId::new("canonicalized", n), &page, |b, p| {
            b.iter(|| canon.digest(p.as_bytes(), DigestMode::Canonicalized))
        });
    }
    g.finish();
}

fn discovery(c: &mut Criterion) {
    let site = synthetic_site(500, 8);
    let seed = NormalizedUrl::parse(&format!("{HOST}/")).unwrap();
    let policy = CrawlPolicy::new(["bench.test"])
        .unwrap()
        .with_politeness_delay(Duration::ZERO);
    let options = DiscoverOptions {
        robots: RobotsMode::Ignore,
        ..Default::default()
    };
    let clock = SimulatedClock::new(DateTime::UNIX_EPOCH);
    c.bench_function("discover_500_pages", |b| {
        b.iter(|| discover_with(&seed, &site, &policy, &options, &clock).unwrap().len())
    });
}

fn coverage(c: &mut Criterion) {
    let params = CoverageParams::new(100, 40, 6).unwrap();
    let mut g = c.benchmark_group("coverage");
    g.sample_size(20);
    g.bench_function("monte_carlo_1000_trials", |b| {
        b.iter(|| simulate_coverage(&params, 1000, black_box(7)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, links, digest, discovery, coverage);
criterion_main!(benches);
