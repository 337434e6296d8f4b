//! Particle filters returning unbiased likelihood estimates.
//!
//! Both filters accumulate in the log domain. A step in which every weight is
//! zero ends the run with `total = -inf` and `degenerate_at = Some(t)` rather
//! than an error, so a Metropolis-Hastings kernel can simply reject.

mod apf;
mod resample;
mod sir;

pub use apf::apf_filter;
pub use resample::{resample, resample_into};
pub use sir::sir_filter;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("numerical failure (NaN density) at t = {t}")]
    NumericalFailure { t: usize },
    #[error("non-finite resampling mass")]
    BadMass,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("filter configuration: {0}")]
    Config(String),
    #[error("worker seeds collide: {0:?}")]
    SeedCollision(Vec<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    Multinomial,
    #[default]
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[default]
    Sir,
    Apf,
}

/// Default defensive mass for the auxiliary filter.
pub const DEFAULT_APF_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSettings {
    pub particles: usize,
    pub resampling: Resampling,
    /// Defensive mixture weight on `phi_t`; only the auxiliary filter reads it.
    pub apf_epsilon: f64,
    pub seed: u64,
}

impl FilterSettings {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self { particles, resampling: Resampling::Stratified, apf_epsilon: 0.0, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub(crate) fn validate(&self, horizon: usize) -> Result<(), FilterError> {
        if self.particles < 2 {
            return Err(FilterError::Config("at least two particles are required".into()));
        }
        if horizon == 0 {
            return Err(FilterError::Config("empty observation series".into()));
        }
        if !(0.0..1.0).contains(&self.apf_epsilon) && self.apf_epsilon != 1.0 {
            return Err(FilterError::Config(format!(
                "apf_epsilon must lie in [0, 1], got {}",
                self.apf_epsilon
            )));
        }
        Ok(())
    }
}

/// Log of the filter's likelihood product with its per-step factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihoodEstimate {
    pub total: f64,
    /// `log p_hat(y_t | y_{1:t-1})` for each processed step. Shorter than the
    /// series only when the run degenerated.
    pub per_step: Vec<f64>,
    /// First time index at which all weights were zero.
    pub degenerate_at: Option<usize>,
}

impl LogLikelihoodEstimate {
    pub fn from_steps(per_step: Vec<f64>) -> Self {
        let total = per_step.iter().sum();
        Self { total, per_step, degenerate_at: None }
    }

    pub fn degenerate(mut per_step: Vec<f64>, t: usize) -> Self {
        per_step.push(f64::NEG_INFINITY);
        Self { total: f64::NEG_INFINITY, per_step, degenerate_at: Some(t) }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_at.is_some()
    }
}

/// Rao-Blackwellised filtered mean and variance of the model's state summary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilteredMoments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub estimate: LogLikelihoodEstimate,
    pub moments: Option<FilteredMoments>,
}

/// Particle states with weights and normalized masses at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<S> {
    pub states: Vec<S>,
    pub log_weights: Vec<f64>,
    pub masses: Vec<f64>,
}

impl<S> ParticleCloud<S> {
    /// Builds a cloud from log weights. Returns `None` when every weight is
    /// zero.
    pub fn from_log_weights(states: Vec<S>, log_weights: Vec<f64>) -> Option<Self> {
        let mut masses = Vec::with_capacity(log_weights.len());
        normalize_into(&log_weights, &mut masses)?;
        Some(Self { states, log_weights, masses })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Writes `exp(lw - logsumexp(lw))` into `out` and returns the log-sum-exp,
/// or `None` when all entries are `-inf`.
pub(crate) fn normalize_into(log_weights: &[f64], out: &mut Vec<f64>) -> Option<f64> {
    out.clear();
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    out.extend(log_weights.iter().map(|w| (w - max).exp()));
    let sum: f64 = out.iter().sum();
    let inv = 1.0 / sum;
    out.iter_mut().for_each(|m| *m *= inv);
    Some(max + sum.ln())
}

pub(crate) fn weighted_moments(values: impl Iterator<Item = f64> + Clone, masses: &[f64]) -> (f64, f64) {
    let mean: f64 = values.clone().zip(masses).map(|(v, m)| v * m).sum();
    let var: f64 = values.zip(masses).map(|(v, m)| m * (v - mean) * (v - mean)).sum();
    (mean, var)
}
