use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use super::negbin::sample_poisson;
use crate::model::{ModelError, StateSpaceModel};
use crate::params::ParameterVector;

/// Log-rates above this are treated as overflow.
pub const MAX_LOG_RATE: f64 = 700.0;

/// `log Poisson(y; exp(log_rate))`; `-inf` on overflow or non-count `y`.
pub fn poisson_log_pmf(y: f64, log_rate: f64) -> f64 {
    if y < 0.0 || y.fract() != 0.0 || log_rate > MAX_LOG_RATE || log_rate.is_nan() {
        return f64::NEG_INFINITY;
    }
    let rate = log_rate.exp();
    if y == 0.0 {
        return -rate;
    }
    y * log_rate - rate - ln_gamma(y + 1.0)
}

/// Poisson counts with a random-walk log-rate:
/// `y_t ~ Poisson(exp(mu_t))`, `mu_t = mu_{t-1} + sigma eps_t`.
///
/// `sigma2` is the innovation variance; `mu0` is the initial log-rate.
#[derive(Debug, Clone, Default)]
pub struct PoissonRwModel;

#[derive(Debug, Clone, Copy)]
pub struct PoissonRwParams {
    pub sigma: f64,
    pub mu0: f64,
}

impl StateSpaceModel for PoissonRwModel {
    type State = f64;
    type Params = PoissonRwParams;

    fn name(&self) -> &str {
        "poisson_rw"
    }

    fn template(&self) -> ParameterVector {
        ParameterVector::default().with("sigma2", 0.05).with("mu0", 0.5)
    }

    fn bind(&self, theta: &ParameterVector) -> Result<PoissonRwParams, ModelError> {
        let s2 = theta.value("sigma2")?;
        let mu0 = theta.value("mu0")?;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(ModelError::OutOfSupport { name: "sigma2".into(), value: s2 });
        }
        if !mu0.is_finite() {
            return Err(ModelError::OutOfSupport { name: "mu0".into(), value: mu0 });
        }
        Ok(PoissonRwParams { sigma: s2.sqrt(), mu0 })
    }

    fn sample_initial<R: Rng + ?Sized>(&self, p: &PoissonRwParams, _rng: &mut R) -> f64 {
        p.mu0
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        p: &PoissonRwParams,
        _t: usize,
        prev: &f64,
        _y: &[f64],
        rng: &mut R,
    ) -> f64 {
        prev + p.sigma * rng.sample::<f64, _>(StandardNormal)
    }

    fn obs_log_density(&self, _p: &PoissonRwParams, _t: usize, y_t: f64, mu: &f64) -> f64 {
        poisson_log_pmf(y_t, *mu)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, _p: &PoissonRwParams, _t: usize, mu: &f64, rng: &mut R) -> f64 {
        sample_poisson(mu.min(MAX_LOG_RATE).exp(), rng)
    }

    fn point_estimate(&self, _p: &PoissonRwParams, _t: usize, prev: &f64, _y: &[f64]) -> Option<f64> {
        Some(*prev)
    }

    fn log_obs_bound(&self, _p: &PoissonRwParams, _t: usize, _y_t: f64) -> Option<f64> {
        Some(0.0)
    }

    fn state_summary(&self, mu: &f64) -> f64 {
        *mu
    }

    fn count_data(&self) -> bool {
        true
    }
}
