//! Pseudo-marginal Metropolis-Hastings chains.
//!
//! The chain stores the likelihood estimate produced when its current point
//! was accepted and never re-evaluates it. Every proposal gets a fresh filter
//! seed, so the chain targets the exact posterior despite the noisy
//! likelihood.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imh::{ImhSettings, ImhState};
use crate::likelihood::Likelihood;
use crate::math::derive_seed;
use crate::mixture::{sample_moments, GaussianMixture, MixtureRecord};
use crate::parallel::{block_imh_sweep, BlockSettings, WorkerPool};
use crate::params::ParameterVector;
use crate::prior::{PriorError, PriorSpec};
use crate::rwm::{RwmSettings, RwmState};

/// Stream identifiers for seed derivation.
pub mod stream {
    pub const PROPOSAL: u64 = 1;
    pub const UNIFORM: u64 = 2;
    pub const FILTER: u64 = 3;
    pub const INIT: u64 = 4;
    pub const EM: u64 = 5;
    pub const WARMUP: u64 = 6;
    pub const EVIDENCE: u64 = 7;
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("no starting point with a finite likelihood estimate after {0} attempts")]
    Init(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Rwm3c,
    Imh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub sampler: SamplerKind,
    /// Recorded iterations, excluding the random-walk warm-up of the IMH sampler.
    pub iterations: usize,
    pub seed: u64,
    pub rwm: RwmSettings,
    pub imh: ImhSettings,
    /// Block-parallel IMH evaluation; `None` runs the sequential kernel.
    pub blocks: Option<BlockSettings>,
}

impl ChainConfig {
    pub fn new(sampler: SamplerKind, iterations: usize, seed: u64) -> Self {
        Self {
            sampler,
            iterations,
            seed,
            rwm: RwmSettings::default(),
            imh: ImhSettings::default(),
            blocks: None,
        }
    }
}

/// Posterior target: likelihood estimator, prior and parameter template.
pub struct Target<'a> {
    pub likelihood: &'a dyn Likelihood,
    pub prior: &'a PriorSpec,
    pub template: ParameterVector,
}

/// Log-prior and likelihood estimate at one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_prior: f64,
    pub log_lik: f64,
    pub failure: Option<String>,
}

impl<'a> Target<'a> {
    pub fn new(likelihood: &'a dyn Likelihood, prior: &'a PriorSpec) -> Result<Self, PriorError> {
        let template = likelihood.template();
        prior.check(&template)?;
        Ok(Self { likelihood, prior, template })
    }

    pub fn with_template(mut self, template: ParameterVector) -> Result<Self, PriorError> {
        self.prior.check(&template)?;
        self.template = template;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    pub fn theta(&self, x: &[f64]) -> ParameterVector {
        self.template.unpack(x).expect("point has the template's free dimension")
    }

    pub fn log_prior(&self, x: &[f64]) -> f64 {
        self.prior.log_prior_unchecked(&self.theta(x))
    }

    /// Evaluates the prior and, inside its support, the likelihood estimate
    /// with `seed`. A filter failure yields `log_lik = -inf`.
    pub fn evaluate(&self, x: &[f64], seed: u64) -> Evaluation {
        let theta = self.theta(x);
        let log_prior = self.prior.log_prior_unchecked(&theta);
        if log_prior == f64::NEG_INFINITY {
            return Evaluation { log_prior, log_lik: f64::NEG_INFINITY, failure: None };
        }
        match self.likelihood.log_likelihood(&theta, seed) {
            Ok(est) => Evaluation { log_prior, log_lik: est.total, failure: None },
            Err(e) => {
                log::warn!("likelihood evaluation failed at {x:?}: {e}");
                Evaluation { log_prior, log_lik: f64::NEG_INFINITY, failure: Some(e.to_string()) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub point: Vec<f64>,
    /// Stored estimate from the evaluation that accepted `point`.
    pub log_lik: f64,
    pub log_prior: f64,
    pub iteration: usize,
    pub accepted: usize,
}

/// Random streams of one chain: proposals, acceptance uniforms and a counter
/// for per-proposal filter seeds.
pub struct Streams {
    master: u64,
    pub proposal: ChaCha8Rng,
    pub uniform: ChaCha8Rng,
    proposals: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self::for_phase(master, 0)
    }

    /// Independent streams for a numbered phase of a run.
    pub fn for_phase(master: u64, phase: u64) -> Self {
        let m = derive_seed(master, &[phase]);
        Self {
            master: m,
            proposal: ChaCha8Rng::seed_from_u64(derive_seed(m, &[stream::PROPOSAL])),
            uniform: ChaCha8Rng::seed_from_u64(derive_seed(m, &[stream::UNIFORM])),
            proposals: 0,
        }
    }

    /// Seed for the next proposal's filter run; never repeats within a phase.
    pub fn next_filter_seed(&mut self) -> u64 {
        let s = derive_seed(self.master, &[stream::FILTER, self.proposals]);
        self.proposals += 1;
        s
    }

    pub fn proposals(&self) -> u64 {
        self.proposals
    }
}

/// `log` Metropolis-Hastings ratio; `-inf` when the candidate has zero prior
/// or likelihood estimate.
pub fn log_acceptance_ratio(candidate: &Evaluation, chain: &ChainState, log_q_adjust: f64) -> f64 {
    if candidate.log_prior == f64::NEG_INFINITY || candidate.log_lik == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    (candidate.log_lik + candidate.log_prior) - (chain.log_lik + chain.log_prior) + log_q_adjust
}

/// Accepts when `u < exp(log_ratio)`.
pub fn mh_accept(log_ratio: f64, u: f64) -> bool {
    log_ratio >= 0.0 || u.ln() < log_ratio
}

pub enum Kernel<'k> {
    Rwm(&'k mut RwmState),
    Imh(&'k ImhState),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub candidate: Vec<f64>,
    pub evaluation: Evaluation,
}

/// Applies the acceptance rule to an evaluated candidate, drawing one uniform.
pub fn apply_candidate<R: Rng + ?Sized>(
    chain: &mut ChainState,
    candidate: Vec<f64>,
    evaluation: Evaluation,
    log_q_adjust: f64,
    uniform: &mut R,
) -> StepOutcome {
    let u: f64 = uniform.random();
    let accepted = mh_accept(log_acceptance_ratio(&evaluation, chain, log_q_adjust), u);
    chain.iteration += 1;
    if accepted {
        chain.point = candidate.clone();
        chain.log_lik = evaluation.log_lik;
        chain.log_prior = evaluation.log_prior;
        chain.accepted += 1;
    }
    StepOutcome { accepted, candidate, evaluation }
}

/// One PMMH iteration: propose, estimate the likelihood with a fresh seed
/// (skipped outside the prior support), accept or reject.
pub fn pmmh_step(chain: &mut ChainState, kernel: Kernel<'_>, target: &Target<'_>, streams: &mut Streams) -> StepOutcome {
    let (candidate, adjust) = match kernel {
        Kernel::Rwm(rwm) => (rwm.propose(&chain.point, &mut streams.proposal).0, None),
        Kernel::Imh(imh) => {
            let c = imh.propose(&mut streams.proposal);
            (c, Some(imh))
        }
    };
    let seed = streams.next_filter_seed();
    let evaluation = target.evaluate(&candidate, seed);
    let log_q_adjust = match adjust {
        None => 0.0,
        Some(imh) if evaluation.log_lik > f64::NEG_INFINITY => {
            imh.log_density(&chain.point) - imh.log_density(&candidate)
        }
        Some(_) => 0.0,
    };
    apply_candidate(chain, candidate, evaluation, log_q_adjust, &mut streams.uniform)
}

/// Everything recorded by a run. Rows follow iteration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub log_lik: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Wall-clock seconds spent on each iteration.
    pub seconds: Vec<f64>,
    /// Random-walk warm-up of the IMH sampler.
    pub warmup: Option<Box<RunRecord>>,
    /// Final IMH proposal as a flat mixture.
    pub proposal: Option<MixtureRecord>,
    pub filter_failures: usize,
    pub rwm_fallbacks: usize,
    pub failed_refits: usize,
}

impl RunRecord {
    fn push(&mut self, chain: &ChainState, outcome: &StepOutcome, seconds: f64) {
        self.draws.push(chain.point.clone());
        self.log_lik.push(chain.log_lik);
        self.log_prior.push(chain.log_prior);
        self.accepted.push(outcome.accepted);
        self.seconds.push(seconds);
        if outcome.evaluation.failure.is_some() {
            self.filter_failures += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Column `k` of the draws.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[k]).collect()
    }

    pub fn proposal_mixture(&self) -> Option<GaussianMixture> {
        self.proposal.as_ref().and_then(|r| GaussianMixture::from_record(r).ok())
    }
}

const INIT_ATTEMPTS: usize = 100;

fn initial_state(target: &Target<'_>, init: Option<&[f64]>, master: u64) -> Result<ChainState, ChainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, &[stream::INIT]));
    for attempt in 0..INIT_ATTEMPTS {
        let point = match init {
            Some(p) if attempt == 0 => p.to_vec(),
            _ => target.prior.sample(&target.template, &mut rng).pack(),
        };
        let seed = derive_seed(master, &[stream::INIT, attempt as u64]);
        let ev = target.evaluate(&point, seed);
        if ev.log_prior.is_finite() && ev.log_lik.is_finite() {
            return Ok(ChainState { point, log_lik: ev.log_lik, log_prior: ev.log_prior, iteration: 0, accepted: 0 });
        }
    }
    Err(ChainError::Init(INIT_ATTEMPTS))
}

fn sigma1(target: &Target<'_>, settings: &RwmSettings) -> Result<DMatrix<f64>, ChainError> {
    let d = target.dim();
    let diag = match &settings.sigma1_diag {
        Some(v) if v.len() == d => v.clone(),
        Some(v) => return Err(ChainError::Config(format!("sigma1_diag has {} entries, need {d}", v.len()))),
        None => target.prior.scale_variances(&target.template),
    };
    if diag.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(ChainError::Config(format!("fixed random-walk variances must be positive: {diag:?}")));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_vec(diag)))
}

fn run_rwm(
    target: &Target<'_>,
    rwm: &mut RwmState,
    chain: &mut ChainState,
    iterations: usize,
    streams: &mut Streams,
    record: &mut RunRecord,
) {
    let report = (iterations / 10).max(1);
    for j in 1..=iterations {
        let start = Instant::now();
        let outcome = pmmh_step(chain, Kernel::Rwm(rwm), target, streams);
        rwm.update(&chain.point);
        record.push(chain, &outcome, start.elapsed().as_secs_f64());
        if j % report == 0 {
            log::info!("rwm3c {j}/{iterations}: acceptance {:.1}%", 100.0 * chain.accepted as f64 / j as f64);
        }
    }
    record.rwm_fallbacks = rwm.fallbacks();
}

/// Runs a chain. The IMH sampler first runs the random-walk sampler for
/// `imh.warmup` iterations, fits `g1` to the second half of those draws and
/// starts from their mean.
pub fn run_chain(
    config: &ChainConfig,
    target: &Target<'_>,
    init: Option<&[f64]>,
    pool: &WorkerPool,
) -> Result<RunRecord, ChainError> {
    let d = target.dim();
    let mut record = RunRecord { names: target.template.free_names(), ..Default::default() };
    if config.iterations == 0 {
        return Ok(record);
    }
    if d == 0 {
        return Err(ChainError::Config("no free parameters".into()));
    }
    if let Some(p) = init {
        if p.len() != d {
            return Err(ChainError::Config(format!("initial point has {} entries, need {d}", p.len())));
        }
    }
    config.imh.validate().map_err(ChainError::Config)?;
    if let Some(b) = &config.blocks {
        b.validate().map_err(ChainError::Config)?;
        if config.sampler != SamplerKind::Imh {
            return Err(ChainError::Config("block-parallel evaluation needs the IMH sampler".into()));
        }
    }
    let s1 = sigma1(target, &config.rwm)?;
    let mut rwm = RwmState::new(s1.clone(), config.rwm.j0, config.rwm.kappa)
        .ok_or_else(|| ChainError::Config("fixed random-walk covariance is not positive definite".into()))?;
    let mut chain = initial_state(target, init, config.seed)?;

    match config.sampler {
        SamplerKind::Rwm3c => {
            let mut streams = Streams::for_phase(config.seed, stream::PROPOSAL);
            run_rwm(target, &mut rwm, &mut chain, config.iterations, &mut streams, &mut record);
        }
        SamplerKind::Imh => {
            let mut warm = RunRecord { names: record.names.clone(), ..Default::default() };
            let mut streams = Streams::for_phase(config.seed, stream::WARMUP);
            run_rwm(target, &mut rwm, &mut chain, config.imh.warmup, &mut streams, &mut warm);
            let g1 = initial_mixture(&warm.draws, &s1);
            if let Some(mean) = g1.components().first().map(|c| c.mean.as_slice().to_vec()) {
                let seed = derive_seed(config.seed, &[stream::INIT, u64::MAX]);
                let ev = target.evaluate(&mean, seed);
                if ev.log_prior.is_finite() && ev.log_lik.is_finite() {
                    chain = ChainState { point: mean, log_lik: ev.log_lik, log_prior: ev.log_prior, iteration: 0, accepted: 0 };
                }
            }
            chain.iteration = 0;
            chain.accepted = 0;
            record.rwm_fallbacks = warm.rwm_fallbacks;
            record.warmup = Some(Box::new(warm));
            let mut imh = ImhState::new(g1);
            let mut em_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[stream::EM]));
            let mut streams = Streams::for_phase(config.seed, stream::PROPOSAL);
            match &config.blocks {
                None => run_imh(config, target, &mut imh, &mut chain, &mut streams, &mut em_rng, &mut record),
                Some(b) => run_imh_blocks(config, b, target, &mut imh, &mut chain, &mut streams, &mut em_rng, pool, &mut record),
            }
            record.failed_refits = imh.failed_refits();
            record.proposal = Some(imh.as_mixture().to_record());
        }
    }
    Ok(record)
}

/// Single Gaussian fitted to the second half of the warm-up draws, with a
/// small ridge; falls back to `fallback` when the draws have no spread.
fn initial_mixture(warmup: &[Vec<f64>], fallback: &DMatrix<f64>) -> GaussianMixture {
    let d = fallback.nrows();
    let half = &warmup[warmup.len() / 2..];
    if half.len() >= d + 2 {
        let (mean, cov) = sample_moments(half);
        let ridge = 1e-6 * cov.trace() / d as f64;
        if ridge > 0.0 {
            if let Ok(g) = GaussianMixture::single(mean.clone(), cov + DMatrix::identity(d, d) * ridge) {
                return g;
            }
        }
        log::warn!("warm-up draws have no spread; using the fixed random-walk covariance for g1");
        return GaussianMixture::single(mean, fallback.clone()).expect("fixed covariance is positive definite");
    }
    let mean = warmup.last().map_or(DVector::zeros(d), |p| DVector::from_column_slice(p));
    GaussianMixture::single(mean, fallback.clone()).expect("fixed covariance is positive definite")
}

fn run_imh(
    config: &ChainConfig,
    target: &Target<'_>,
    imh: &mut ImhState,
    chain: &mut ChainState,
    streams: &mut Streams,
    em_rng: &mut ChaCha8Rng,
    record: &mut RunRecord,
) {
    let stage_two = config.imh.stage_two_start(config.iterations);
    let report = (config.iterations / 10).max(1);
    for j in 1..=config.iterations {
        let start = Instant::now();
        let outcome = pmmh_step(chain, Kernel::Imh(imh), target, streams);
        imh.record(outcome.accepted);
        record.push(chain, &outcome, start.elapsed().as_secs_f64());
        if config.imh.refit_at.contains(&j) {
            let _ = imh.refit(&record.draws, &config.imh, em_rng);
            if stage_two == Some(j) {
                imh.enter_stage_two();
            }
        }
        if j % report == 0 {
            log::info!("imh {j}/{}: acceptance {:.1}%", config.iterations, 100.0 * chain.accepted as f64 / j as f64);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_imh_blocks(
    config: &ChainConfig,
    blocks: &BlockSettings,
    target: &Target<'_>,
    imh: &mut ImhState,
    chain: &mut ChainState,
    streams: &mut Streams,
    em_rng: &mut ChaCha8Rng,
    pool: &WorkerPool,
    record: &mut RunRecord,
) {
    let total = config.iterations;
    let mut stage_two_done = false;
    let mut b = 0;
    while record.len() < total {
        let count = blocks.proposals_in_block(b).min(total - record.len());
        let start = Instant::now();
        let outcomes = block_imh_sweep(chain, imh, count, target, streams, pool);
        let per = start.elapsed().as_secs_f64() / count as f64;
        for (state, outcome) in &outcomes {
            imh.record(outcome.accepted);
            record.push(state, outcome, per);
        }
        b += 1;
        if record.len() < total {
            let _ = imh.refit(&record.draws, &config.imh, em_rng);
            if !stage_two_done && 2 * record.len() >= total {
                imh.enter_stage_two();
                stage_two_done = true;
            }
        }
        log::info!("imh block {b}: {} / {total} draws", record.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(ll: f64) -> ChainState {
        ChainState { point: vec![0.0], log_lik: ll, log_prior: 0.0, iteration: 0, accepted: 0 }
    }

    fn ev(ll: f64) -> Evaluation {
        Evaluation { log_prior: 0.0, log_lik: ll, failure: None }
    }

    #[test]
    fn ratio_for_worse_candidate() {
        let r = log_acceptance_ratio(&ev(-20.0), &chain(-10.0), 0.0);
        assert!((r + 10.0).abs() < 1e-12);
        // Accepted exactly when u < e^-10.
        assert!(mh_accept(r, (-10.0f64).exp() * 0.999));
        assert!(!mh_accept(r, (-10.0f64).exp() * 1.001));
    }

    #[test]
    fn zero_estimate_never_accepted() {
        let r = log_acceptance_ratio(&ev(f64::NEG_INFINITY), &chain(-10.0), 0.0);
        assert_eq!(r, f64::NEG_INFINITY);
        assert!(!mh_accept(r, 0.0));
    }

    #[test]
    fn ratio_shift_invariant() {
        let a = log_acceptance_ratio(&ev(-3.0), &chain(-2.0), 0.4);
        let b = log_acceptance_ratio(&ev(997.0), &chain(998.0), 0.4);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn filter_seeds_never_repeat() {
        let mut s = Streams::new(5);
        let seeds: std::collections::BTreeSet<u64> = (0..10_000).map(|_| s.next_filter_seed()).collect();
        assert_eq!(seeds.len(), 10_000);
    }
}
