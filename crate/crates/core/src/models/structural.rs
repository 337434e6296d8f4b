//! Poisson counts with a dynamic level, slope, intervention and seasonal
//! terms:
//!
//! ```text
//! y_t ~ Poisson(exp(x_t' beta + mu_t + s_t))
//! mu_t = mu_{t-1} + a_{t-1} + delta I(t = t_int) + sigma eps_t
//! a_t = a_{t-1} + tau xi_t
//! s_t = sum_j alpha_j cos(w_j t) + gamma_j sin(w_j t),  w_j = 2 pi j / h
//! ```
//!
//! The level and slope start at the parameters `mu0` and `a0`. `sigma2` and
//! `tau2` are innovation variances. Covariate coefficients are named
//! `beta_<column>` and seasonal coefficients `alpha_<j>` and `gamma_<j>`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::negbin::sample_poisson;
use super::poisson_rw::{poisson_log_pmf, MAX_LOG_RATE};
use crate::model::{ModelError, StateSpaceModel};
use crate::params::ParameterVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralOptions {
    /// Number of seasonal harmonics `J`.
    pub harmonics: usize,
    /// Seasonal period `h`.
    pub period: f64,
    /// Time of the level intervention; `None` fixes `delta` at zero.
    pub intervention: Option<usize>,
    /// Whether the slope is dynamic; otherwise `a0` and `tau2` are fixed at zero.
    pub trend: bool,
}

impl Default for StructuralOptions {
    fn default() -> Self {
        Self { harmonics: 1, period: 12.0, intervention: None, trend: true }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonStructuralModel {
    pub options: StructuralOptions,
    covariates: Vec<(String, Vec<f64>)>,
    horizon: usize,
    overflows: Arc<AtomicU64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelSlope {
    pub level: f64,
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct StructuralParams {
    pub mu0: f64,
    pub a0: f64,
    pub sigma: f64,
    pub tau: f64,
    pub delta: f64,
    /// `x_t' beta + s_t` for `t = 1..=T` at index `t - 1`.
    offset: Vec<f64>,
}

/// `s_t` for `t = 1..=horizon` given `(alpha_j, gamma_j)` pairs.
pub fn seasonal_terms(coefs: &[(f64, f64)], period: f64, horizon: usize) -> Vec<f64> {
    (1..=horizon)
        .map(|t| {
            coefs
                .iter()
                .enumerate()
                .map(|(j, (a, g))| {
                    let w = 2.0 * PI * (j + 1) as f64 / period;
                    a * (w * t as f64).cos() + g * (w * t as f64).sin()
                })
                .sum()
        })
        .collect()
}

impl PoissonStructuralModel {
    /// `covariates` are named columns of length at least `horizon`.
    pub fn new(
        options: StructuralOptions,
        covariates: Vec<(String, Vec<f64>)>,
        horizon: usize,
    ) -> Result<Self, ModelError> {
        if !(options.period > 0.0) {
            return Err(ModelError::Config(format!("seasonal period {} must be positive", options.period)));
        }
        if let Some(t) = options.intervention {
            if t == 0 {
                return Err(ModelError::Config("intervention time is 1-based".into()));
            }
        }
        for (name, col) in &covariates {
            if col.len() < horizon {
                return Err(ModelError::Config(format!(
                    "covariate `{name}` has {} values, need {horizon}",
                    col.len()
                )));
            }
        }
        Ok(Self { options, covariates, horizon, overflows: Arc::new(AtomicU64::new(0)) })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of observation evaluations whose log-rate exceeded the overflow
    /// threshold.
    pub fn overflow_count(&self) -> u64 {
        self.overflows.load(Ordering::Relaxed)
    }

    fn log_rate(&self, p: &StructuralParams, t: usize, s: &LevelSlope) -> f64 {
        p.offset.get(t - 1).copied().unwrap_or(f64::NAN) + s.level
    }
}

impl StateSpaceModel for PoissonStructuralModel {
    type State = LevelSlope;
    type Params = StructuralParams;

    fn name(&self) -> &str {
        "poisson_structural"
    }

    fn template(&self) -> ParameterVector {
        let mut t = ParameterVector::default();
        for (name, _) in &self.covariates {
            t = t.with(&format!("beta_{name}"), 1.0);
        }
        t = t.with("mu0", 0.0);
        t = if self.options.trend { t.with("a0", 0.0).with("tau2", 0.001) } else { t.with_fixed("a0", 0.0).with_fixed("tau2", 0.0) };
        t = t.with("sigma2", 0.05);
        t = if self.options.intervention.is_some() { t.with("delta", 0.0) } else { t.with_fixed("delta", 0.0) };
        for j in 1..=self.options.harmonics {
            t = t.with(&format!("alpha_{j}"), 0.0).with(&format!("gamma_{j}"), 0.0);
        }
        t
    }

    fn bind(&self, theta: &ParameterVector) -> Result<StructuralParams, ModelError> {
        let mu0 = theta.value("mu0")?;
        let a0 = theta.value("a0")?;
        let s2 = theta.value("sigma2")?;
        let t2 = theta.value("tau2")?;
        let delta = theta.value("delta")?;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(ModelError::OutOfSupport { name: "sigma2".into(), value: s2 });
        }
        if !(t2 >= 0.0 && t2.is_finite()) {
            return Err(ModelError::OutOfSupport { name: "tau2".into(), value: t2 });
        }
        let mut coefs = Vec::with_capacity(self.options.harmonics);
        for j in 1..=self.options.harmonics {
            coefs.push((theta.value(&format!("alpha_{j}"))?, theta.value(&format!("gamma_{j}"))?));
        }
        let mut offset = seasonal_terms(&coefs, self.options.period, self.horizon);
        for (name, col) in &self.covariates {
            let b = theta.value(&format!("beta_{name}"))?;
            for (o, x) in offset.iter_mut().zip(col) {
                *o += b * x;
            }
        }
        Ok(StructuralParams { mu0, a0, sigma: s2.sqrt(), tau: t2.sqrt(), delta, offset })
    }

    fn sample_initial<R: Rng + ?Sized>(&self, p: &StructuralParams, _rng: &mut R) -> LevelSlope {
        LevelSlope { level: p.mu0, slope: p.a0 }
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        p: &StructuralParams,
        t: usize,
        prev: &LevelSlope,
        _y: &[f64],
        rng: &mut R,
    ) -> LevelSlope {
        let e: f64 = rng.sample(StandardNormal);
        let jump = if self.options.intervention == Some(t) { p.delta } else { 0.0 };
        let level = prev.level + prev.slope + jump + p.sigma * e;
        let slope = if p.tau > 0.0 { prev.slope + p.tau * rng.sample::<f64, _>(StandardNormal) } else { prev.slope };
        LevelSlope { level, slope }
    }

    fn obs_log_density(&self, p: &StructuralParams, t: usize, y_t: f64, s: &LevelSlope) -> f64 {
        let lr = self.log_rate(p, t, s);
        if lr > MAX_LOG_RATE {
            self.overflows.fetch_add(1, Ordering::Relaxed);
        }
        poisson_log_pmf(y_t, lr)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, p: &StructuralParams, t: usize, s: &LevelSlope, rng: &mut R) -> f64 {
        sample_poisson(self.log_rate(p, t, s).min(MAX_LOG_RATE).exp(), rng)
    }

    fn point_estimate(&self, p: &StructuralParams, t: usize, prev: &LevelSlope, _y: &[f64]) -> Option<LevelSlope> {
        let jump = if self.options.intervention == Some(t) { p.delta } else { 0.0 };
        Some(LevelSlope { level: prev.level + prev.slope + jump, slope: prev.slope })
    }

    fn log_obs_bound(&self, _p: &StructuralParams, _t: usize, _y_t: f64) -> Option<f64> {
        Some(0.0)
    }

    fn state_summary(&self, s: &LevelSlope) -> f64 {
        s.level
    }

    fn count_data(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_harmonic_has_period_twelve() {
        let s = seasonal_terms(&[(0.7, -0.3)], 12.0, 60);
        for t in 0..48 {
            assert!((s[t + 12] - s[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn template_fixes_absent_components() {
        let m = PoissonStructuralModel::new(
            StructuralOptions { harmonics: 2, trend: false, ..Default::default() },
            vec![("z".into(), vec![0.0; 10])],
            10,
        )
        .unwrap();
        let t = m.template();
        assert_eq!(t.free_names(), ["beta_z", "mu0", "sigma2", "alpha_1", "gamma_1", "alpha_2", "gamma_2"]);
    }

    #[test]
    fn short_covariate_rejected() {
        let r = PoissonStructuralModel::new(StructuralOptions::default(), vec![("z".into(), vec![0.0; 3])], 10);
        assert!(matches!(r, Err(ModelError::Config(_))));
    }
}
