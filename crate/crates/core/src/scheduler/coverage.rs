//! How evenly repeated, budget-truncated runs cover a site.
//!
//! Model: the site has `n_links` targets, each run gets through
//! `per_run_capacity` of them, and there are `n_runs` runs. With a fresh
//! shuffle per run every link is archived at least once with probability
//! `1 - (1 - C/N)^R`. Without shuffling the first `C` links are archived every
//! run and the rest never are.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("invalid coverage parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageParams {
    n_links: usize,
    per_run_capacity: usize,
    n_runs: usize,
}

impl CoverageParams {
    pub fn new(n_links: usize, per_run_capacity: usize, n_runs: usize) -> Result<Self, CoverageError> {
        if n_links == 0 || per_run_capacity == 0 || n_runs == 0 {
            return Err(CoverageError::InvalidParams("all parameters must be positive"));
        }
        if per_run_capacity > n_links {
            return Err(CoverageError::InvalidParams("capacity exceeds link count"));
        }
        Ok(Self {
            n_links,
            per_run_capacity,
            n_runs,
        })
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn per_run_capacity(&self) -> usize {
        self.per_run_capacity
    }

    pub fn n_runs(&self) -> usize {
        self.n_runs
    }

    /// Expected submissions per link over all runs: `R * C / N`.
    pub fn expected_submissions(&self) -> f64 {
        self.n_runs as f64 * self.per_run_capacity as f64 / self.n_links as f64
    }
}

/// Probability that a given link is archived at least once.
pub fn coverage_probability(params: &CoverageParams) -> f64 {
    let miss = 1.0 - params.per_run_capacity as f64 / params.n_links as f64;
    1.0 - miss.powi(params.n_runs as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubmissionOrder {
    #[default]
    Shuffled,
    /// Same order every run.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSimulation {
    pub trials: usize,
    /// Per link: fraction of trials in which it was archived at least once.
    pub coverage: Vec<f64>,
    /// Per link: mean number of submissions across the `R` runs.
    pub mean_submissions: Vec<f64>,
}

impl CoverageSimulation {
    pub fn min_coverage(&self) -> f64 {
        self.coverage.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coverage(&self) -> f64 {
        self.coverage.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_coverage(&self) -> f64 {
        self.coverage.iter().sum::<f64>() / self.coverage.len() as f64
    }

    pub fn overall_mean_submissions(&self) -> f64 {
        self.mean_submissions.iter().sum::<f64>() / self.mean_submissions.len() as f64
    }
}

pub fn simulate_coverage(
    params: &CoverageParams,
    trials: usize,
    rng_seed: u64,
) -> Result<CoverageSimulation, CoverageError> {
    simulate_coverage_with_order(params, trials, rng_seed, SubmissionOrder::Shuffled)
}

/// Monte-Carlo run of `trials` independent sequences of `R` runs, each run
/// submitting the first `C` links of its order.
pub fn simulate_coverage_with_order(
    params: &CoverageParams,
    trials: usize,
    rng_seed: u64,
    order: SubmissionOrder,
) -> Result<CoverageSimulation, CoverageError> {
    if trials == 0 {
        return Err(CoverageError::InvalidParams("trials must be positive"));
    }
    let n = params.n_links;
    let c = params.per_run_capacity;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut links: Vec<usize> = (0..n).collect();
    let mut covered = vec![0u64; n];
    let mut submitted = vec![0u64; n];
    let mut hit_this_trial = vec![false; n];

    for _ in 0..trials {
        hit_this_trial.fill(false);
        for _ in 0..params.n_runs {
            let prefix: &[usize] = match order {
                SubmissionOrder::Shuffled => links.partial_shuffle(&mut rng, c).0,
                SubmissionOrder::Fixed => &links[..c],
            };
            for &link in prefix {
                submitted[link] += 1;
                hit_this_trial[link] = true;
            }
        }
        for (i, hit) in hit_this_trial.iter().enumerate() {
            covered[i] += u64::from(*hit);
        }
    }

    let t = trials as f64;
    Ok(CoverageSimulation {
        trials,
        coverage: covered.iter().map(|&k| k as f64 / t).collect(),
        mean_submissions: submitted.iter().map(|&k| k as f64 / t).collect(),
    })
}
