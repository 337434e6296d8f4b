//! Likelihood evaluators consumed by the MCMC kernels.

use std::sync::Arc;

use crate::filter::{apf_filter, sir_filter, FilterError, FilterKind, FilterOutput, FilterSettings, LogLikelihoodEstimate};
use crate::model::StateSpaceModel;
use crate::models::LinearGaussianModel;
use crate::oracle::kalman_filter;
use crate::parallel::{averaged_likelihood, WorkerPool};
use crate::params::ParameterVector;

/// A (possibly noisy) log-likelihood evaluator keyed by a seed.
pub trait Likelihood: Sync {
    /// Estimate at `theta` with randomness fully determined by `seed`.
    /// `particles` overrides the configured particle count per worker.
    fn evaluate(
        &self,
        theta: &ParameterVector,
        seed: u64,
        particles: Option<usize>,
    ) -> Result<LogLikelihoodEstimate, FilterError>;

    fn log_likelihood(&self, theta: &ParameterVector, seed: u64) -> Result<LogLikelihoodEstimate, FilterError> {
        self.evaluate(theta, seed, None)
    }

    /// True when the estimate is the exact likelihood.
    fn is_exact(&self) -> bool {
        false
    }

    fn template(&self) -> ParameterVector;
}

/// Runs one filter of the configured kind.
pub fn run_filter<M: StateSpaceModel>(
    model: &M,
    kind: FilterKind,
    theta: &ParameterVector,
    y: &[f64],
    settings: &FilterSettings,
    with_moments: bool,
) -> Result<FilterOutput, FilterError> {
    match kind {
        FilterKind::Sir => sir_filter(model, theta, y, settings, with_moments),
        FilterKind::Apf => apf_filter(model, theta, y, settings, with_moments),
    }
}

/// Particle-filter likelihood, averaged over `pool.workers()` independent
/// filters when more than one worker is configured.
pub struct ParticleLikelihood<M: StateSpaceModel> {
    pub model: Arc<M>,
    pub y: Arc<Vec<f64>>,
    pub kind: FilterKind,
    /// Per-worker settings; the seed field is replaced on every evaluation.
    pub settings: FilterSettings,
    pub pool: WorkerPool,
    template: ParameterVector,
}

impl<M: StateSpaceModel> ParticleLikelihood<M> {
    pub fn new(model: M, y: Vec<f64>, kind: FilterKind, settings: FilterSettings) -> Self {
        let template = model.template();
        Self { model: Arc::new(model), y: Arc::new(y), kind, settings, pool: WorkerPool::single(), template }
    }

    /// Replaces the parameter template, e.g. to fix some entries.
    pub fn with_template(mut self, template: ParameterVector) -> Self {
        self.template = template;
        self
    }

    pub fn with_pool(mut self, pool: WorkerPool) -> Self {
        self.pool = pool;
        self
    }
}

impl<M: StateSpaceModel> Likelihood for ParticleLikelihood<M> {
    fn evaluate(
        &self,
        theta: &ParameterVector,
        seed: u64,
        particles: Option<usize>,
    ) -> Result<LogLikelihoodEstimate, FilterError> {
        let mut settings = self.settings;
        if let Some(m) = particles {
            settings.particles = m;
        }
        averaged_likelihood(&*self.model, self.kind, theta, &self.y, &settings.with_seed(seed), &self.pool)
    }

    fn template(&self) -> ParameterVector {
        self.template.clone()
    }
}

/// Exact Kalman likelihood of the linear-Gaussian model; ignores the seed.
pub struct KalmanLikelihood {
    pub model: LinearGaussianModel,
    pub y: Vec<f64>,
    pub template: ParameterVector,
}

impl KalmanLikelihood {
    pub fn new(model: LinearGaussianModel, y: Vec<f64>) -> Self {
        let template = model.template();
        Self { model, y, template }
    }

    pub fn with_template(mut self, template: ParameterVector) -> Self {
        self.template = template;
        self
    }
}

impl Likelihood for KalmanLikelihood {
    fn evaluate(
        &self,
        theta: &ParameterVector,
        _seed: u64,
        _particles: Option<usize>,
    ) -> Result<LogLikelihoodEstimate, FilterError> {
        let ssm = self.model.ssm(theta)?;
        Ok(LogLikelihoodEstimate::from_steps(kalman_filter(&ssm, &self.y).per_step))
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn template(&self) -> ParameterVector {
        self.template.clone()
    }
}
