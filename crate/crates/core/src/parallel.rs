//! Worker pools for averaged likelihood estimates and block-parallel IMH.
//!
//! Every result is a pure function of the seeds and configuration: workers
//! derive their streams from the evaluation seed and their index, and
//! results are collected in index order.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filter::{FilterError, FilterKind, FilterSettings, LogLikelihoodEstimate};
use crate::imh::ImhState;
use crate::likelihood::run_filter;
use crate::math::{derive_seed, log_mean_exp};
use crate::model::StateSpaceModel;
use crate::params::ParameterVector;
use crate::pmmh::{apply_candidate, ChainState, Evaluation, StepOutcome, Streams, Target};

/// `J` likelihood workers, optionally backed by a dedicated thread pool.
#[derive(Clone, Default)]
pub struct WorkerPool {
    workers: usize,
    threads: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.workers())
            .field("threads", &self.threads.as_ref().map(|p| p.current_num_threads()))
            .finish()
    }
}

impl WorkerPool {
    pub fn single() -> Self {
        Self { workers: 1, threads: None }
    }

    /// `workers` logical workers on `threads` OS threads; `threads = 0` uses
    /// rayon's global pool.
    pub fn new(workers: usize, threads: usize) -> Result<Self, String> {
        if workers == 0 {
            return Err("at least one worker is required".into());
        }
        let threads = if threads == 0 {
            None
        } else {
            let p = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            Some(Arc::new(p))
        };
        Ok(Self { workers, threads })
    }

    pub fn workers(&self) -> usize {
        self.workers.max(1)
    }

    pub fn install<R: Send, F: FnOnce() -> R + Send>(&self, f: F) -> R {
        match &self.threads {
            Some(p) => p.install(f),
            None => f(),
        }
    }
}

/// Seeds of the `J` workers for one evaluation.
pub fn worker_seeds(seed: u64, workers: usize) -> Vec<u64> {
    (0..workers as u64).map(|w| derive_seed(seed, &[w])).collect()
}

/// Averaged likelihood estimate over the pool's workers, each running an
/// independent filter with `settings.particles` particles.
pub fn averaged_likelihood<M: StateSpaceModel>(
    model: &M,
    kind: FilterKind,
    theta: &ParameterVector,
    y: &[f64],
    settings: &FilterSettings,
    pool: &WorkerPool,
) -> Result<LogLikelihoodEstimate, FilterError> {
    let seeds = worker_seeds(settings.seed, pool.workers());
    averaged_likelihood_with_seeds(model, kind, theta, y, settings, &seeds, pool)
}

/// As [`averaged_likelihood`] with explicit worker seeds. Repeated seeds are
/// rejected since they would silently average copies of one estimate.
pub fn averaged_likelihood_with_seeds<M: StateSpaceModel>(
    model: &M,
    kind: FilterKind,
    theta: &ParameterVector,
    y: &[f64],
    settings: &FilterSettings,
    seeds: &[u64],
    pool: &WorkerPool,
) -> Result<LogLikelihoodEstimate, FilterError> {
    if seeds.is_empty() {
        return Err(FilterError::Config("no worker seeds".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let dup: Vec<u64> = sorted.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0]).collect();
    if !dup.is_empty() {
        return Err(FilterError::SeedCollision(dup));
    }
    let run = |s: u64| run_filter(model, kind, theta, y, &settings.with_seed(s), false).map(|o| o.estimate);
    if seeds.len() == 1 {
        return run(seeds[0]);
    }
    let results: Vec<Result<LogLikelihoodEstimate, FilterError>> =
        pool.install(|| seeds.par_iter().map(|&s| run(s)).collect());
    let estimates = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(combine_estimates(&estimates, y.len()))
}

/// Averages worker estimates on the natural scale:
/// `total = log((1/J) sum_w exp(total_w))`, split into per-step increments of
/// the averaged running products so that the steps sum to the total.
pub fn combine_estimates(estimates: &[LogLikelihoodEstimate], horizon: usize) -> LogLikelihoodEstimate {
    let mut cumulative: Vec<f64> = vec![0.0; estimates.len()];
    let mut per_step = Vec::with_capacity(horizon);
    let mut prev = 0.0;
    for t in 0..horizon {
        for (c, e) in cumulative.iter_mut().zip(estimates) {
            *c += e.per_step.get(t).copied().unwrap_or(f64::NEG_INFINITY);
        }
        let a = log_mean_exp(&cumulative);
        if a == f64::NEG_INFINITY {
            return LogLikelihoodEstimate::degenerate(per_step, t);
        }
        per_step.push(a - prev);
        prev = a;
    }
    LogLikelihoodEstimate { total: prev, per_step, degenerate_at: None }
}

/// Block schedule for block-parallel IMH.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSettings {
    pub workers: usize,
    /// Proposals per worker in each block; the last entry repeats.
    pub sizes: Vec<usize>,
}

impl Default for BlockSettings {
    fn default() -> Self {
        Self { workers: 8, sizes: vec![15, 25, 60, 125, 250, 375, 500, 625, 750, 940] }
    }
}

impl BlockSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.workers == 0 || self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err("block schedule needs a positive worker count and positive sizes".into());
        }
        Ok(())
    }

    /// Candidates in block `b` (0-based): size times workers.
    pub fn proposals_in_block(&self, b: usize) -> usize {
        self.sizes[b.min(self.sizes.len() - 1)] * self.workers
    }

    /// Candidates per block for the first `n` blocks.
    pub fn schedule(&self, n: usize) -> Vec<usize> {
        (0..n).map(|b| self.proposals_in_block(b)).collect()
    }
}

/// One block of independent MH: draws `count` candidates from the frozen
/// proposal, evaluates them in parallel, then applies the acceptance rule
/// to each in order. Returns the chain state after every candidate.
///
/// Candidates and filter seeds are drawn in the same order as the sequential
/// kernel, so a block of one reproduces a sequential step exactly.
pub fn block_imh_sweep(
    chain: &mut ChainState,
    imh: &ImhState,
    count: usize,
    target: &Target<'_>,
    streams: &mut Streams,
    pool: &WorkerPool,
) -> Vec<(ChainState, StepOutcome)> {
    let candidates: Vec<(Vec<f64>, u64)> = (0..count)
        .map(|_| {
            let c = imh.propose(&mut streams.proposal);
            (c, streams.next_filter_seed())
        })
        .collect();
    let evaluated: Vec<(Evaluation, f64)> = pool.install(|| {
        candidates
            .par_iter()
            .map(|(c, s)| {
                let ev = target.evaluate(c, *s);
                let lq = if ev.log_lik > f64::NEG_INFINITY { imh.log_density(c) } else { 0.0 };
                (ev, lq)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(count);
    let mut current_lq = imh.log_density(&chain.point);
    for ((candidate, _), (ev, lq)) in candidates.into_iter().zip(evaluated) {
        let adjust = if ev.log_lik > f64::NEG_INFINITY { current_lq - lq } else { 0.0 };
        let outcome = apply_candidate(chain, candidate, ev, adjust, &mut streams.uniform);
        if outcome.accepted {
            current_lq = lq;
        }
        out.push((chain.clone(), outcome));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_block_bookkeeping() {
        let b = BlockSettings { workers: 8, sizes: vec![15, 25, 60, 125] };
        assert_eq!(b.schedule(5), vec![120, 200, 480, 1000, 1000]);
    }

    #[test]
    fn combined_steps_sum_to_total() {
        let e = |v: Vec<f64>| LogLikelihoodEstimate::from_steps(v);
        let c = combine_estimates(&[e(vec![-1.0, -2.0, -0.5]), e(vec![-1.5, -1.0, -3.0])], 3);
        let direct = log_mean_exp(&[-3.5, -5.5]);
        assert!((c.total - direct).abs() < 1e-12);
        assert!((c.per_step.iter().sum::<f64>() - c.total).abs() < 1e-12);
    }

    #[test]
    fn one_degenerate_worker_is_averaged_in() {
        let ok = LogLikelihoodEstimate::from_steps(vec![-1.0, -1.0]);
        let bad = LogLikelihoodEstimate::degenerate(vec![-1.0], 1);
        let c = combine_estimates(&[ok, bad], 2);
        assert!((c.total - (-2.0 - 2f64.ln())).abs() < 1e-12);
        assert!(!c.is_degenerate());
    }

    #[test]
    fn all_degenerate_is_degenerate() {
        let bad = LogLikelihoodEstimate::degenerate(vec![-1.0], 1);
        let c = combine_estimates(&[bad.clone(), bad], 3);
        assert_eq!(c.degenerate_at, Some(1));
        assert_eq!(c.total, f64::NEG_INFINITY);
    }
}
