//! Stochastic volatility with optional leverage and outliers:
//!
//! ```text
//! y_t = K_t exp(x_t / 2) eps_t
//! x_t = mu + phi (x_{t-1} - mu) + sigma_eta eta_t
//! corr(eps, eta) = rho,  P(K_t = 2.5) = omega,  P(K_t = 1) = 1 - omega
//! ```
//!
//! The free parameters are `mu`, `phi`, `sigma2_eta` (the state innovation
//! variance) and `rho`. The observation density marginalizes `K_t`, so it has
//! the closed-form bound `sup_x p(y|x) = (2 pi e y^2)^(-1/2)`.
//!
//! Leverage ties `eta_{t+1}` to the realized `eps_t` by default. The shock is
//! recovered from `y_t` after drawing `K_t` from its posterior given
//! `(y_t, x_t)`, so the particle state stays scalar and the observation
//! density stays analytic. The contemporaneous timing (`eps_t` with `eta_t`)
//! carries `eta_t` in the state and makes the observation density depend on
//! it; no finite bound exists in that case.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{log_add_exp, LN_2PI};
use crate::model::{ModelError, StateSpaceModel};
use crate::params::ParameterVector;

pub const OUTLIER_SCALE: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeverageTiming {
    /// `corr(eps_t, eta_{t+1}) = rho`.
    #[default]
    NextStep,
    /// `corr(eps_t, eta_t) = rho`.
    Contemporaneous,
}

#[derive(Debug, Clone)]
pub struct SvModel {
    pub leverage: bool,
    /// Outlier probability; zero disables the outlier component.
    pub omega: f64,
    pub timing: LeverageTiming,
    pub x0_mean: f64,
    pub x0_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SvState {
    pub x: f64,
    /// Standardized state shock of the last transition; read only under
    /// contemporaneous leverage.
    pub eta: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma_eta: f64,
    pub rho: f64,
    rho_c: f64,
    log_rho_c: f64,
    log_omega: f64,
    log_one_minus_omega: f64,
}

impl SvModel {
    pub fn new(leverage: bool, omega: f64) -> Self {
        Self { leverage, omega, timing: LeverageTiming::NextStep, x0_mean: 0.0, x0_var: 100.0 }
    }

    pub fn with_timing(mut self, timing: LeverageTiming) -> Self {
        self.timing = timing;
        self
    }

    fn contemporaneous(&self) -> bool {
        self.leverage && self.timing == LeverageTiming::Contemporaneous
    }

    /// `log N(y; mean, scale^2 e^x)`, given `inv_ex = e^-x`.
    #[inline]
    fn log_component(y: f64, mean: f64, x: f64, inv_ex: f64, log_scale: f64, scale2: f64) -> f64 {
        let d = y - mean;
        -0.5 * LN_2PI - log_scale - 0.5 * x - 0.5 * d * d * inv_ex / scale2
    }

    /// Log mixture density of `y` given `x` and an optional conditional mean
    /// shift `shift * K` with residual variance factor `v = exp(2 half_log_v)`.
    fn mixture_log_density(&self, p: &SvParams, y: f64, x: f64, shift: f64, v: f64, half_log_v: f64) -> f64 {
        let inv_ex = (-x).exp();
        let mean = if shift == 0.0 { 0.0 } else { shift * (0.5 * x).exp() };
        let base = Self::log_component(y, mean, x, inv_ex, half_log_v, v);
        if self.omega == 0.0 {
            return base;
        }
        let k = OUTLIER_SCALE;
        let out = Self::log_component(y, k * mean, x, inv_ex, k.ln() + half_log_v, k * k * v);
        log_add_exp(p.log_one_minus_omega + base, p.log_omega + out)
    }
}

impl StateSpaceModel for SvModel {
    type State = SvState;
    type Params = SvParams;

    fn name(&self) -> &str {
        match (self.leverage, self.omega > 0.0) {
            (false, false) => "sv",
            (true, false) => "sv_leverage",
            (false, true) => "sv_outlier",
            (true, true) => "sv_leverage_outlier",
        }
    }

    fn template(&self) -> ParameterVector {
        let t = ParameterVector::default().with("mu", 0.0).with("phi", 0.9).with("sigma2_eta", 0.05);
        if self.leverage {
            t.with("rho", 0.0)
        } else {
            t.with_fixed("rho", 0.0)
        }
    }

    fn bind(&self, theta: &ParameterVector) -> Result<SvParams, ModelError> {
        let mu = theta.value("mu")?;
        let phi = theta.value("phi")?;
        let s2 = theta.value("sigma2_eta")?;
        let rho = theta.value("rho")?;
        if !mu.is_finite() {
            return Err(ModelError::OutOfSupport { name: "mu".into(), value: mu });
        }
        if !(phi > -1.0 && phi < 1.0) {
            return Err(ModelError::OutOfSupport { name: "phi".into(), value: phi });
        }
        if !(s2 >= 0.0 && s2.is_finite()) {
            return Err(ModelError::OutOfSupport { name: "sigma2_eta".into(), value: s2 });
        }
        if !(rho > -1.0 && rho < 1.0) {
            return Err(ModelError::OutOfSupport { name: "rho".into(), value: rho });
        }
        if !self.leverage && rho != 0.0 {
            return Err(ModelError::Config("rho must be 0 without leverage".into()));
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(ModelError::Config(format!("omega = {} outside [0, 1)", self.omega)));
        }
        Ok(SvParams {
            mu,
            phi,
            sigma_eta: s2.sqrt(),
            rho,
            rho_c: (1.0 - rho * rho).sqrt(),
            log_rho_c: 0.5 * (1.0 - rho * rho).ln(),
            log_omega: self.omega.ln(),
            log_one_minus_omega: (1.0 - self.omega).ln(),
        })
    }

    fn sample_initial<R: Rng + ?Sized>(&self, _p: &SvParams, rng: &mut R) -> SvState {
        let z: f64 = rng.sample(StandardNormal);
        SvState { x: self.x0_mean + self.x0_var.sqrt() * z, eta: 0.0 }
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        p: &SvParams,
        t: usize,
        prev: &SvState,
        y: &[f64],
        rng: &mut R,
    ) -> SvState {
        let zeta: f64 = rng.sample(StandardNormal);
        let eta = if self.leverage && self.timing == LeverageTiming::NextStep && t >= 2 && p.rho != 0.0 {
            let y_prev = y[t - 2];
            let k = if self.omega > 0.0 {
                // Posterior probability of the outlier scale given (y_{t-1}, x_{t-1}).
                let inv_ex = (-prev.x).exp();
                let l1 = Self::log_component(y_prev, 0.0, prev.x, inv_ex, 0.0, 1.0);
                let l2 = Self::log_component(
                    y_prev,
                    0.0,
                    prev.x,
                    inv_ex,
                    OUTLIER_SCALE.ln(),
                    OUTLIER_SCALE * OUTLIER_SCALE,
                );
                let a = p.log_omega + l2;
                let post = (a - log_add_exp(p.log_one_minus_omega + l1, a)).exp();
                if rng.random::<f64>() < post {
                    OUTLIER_SCALE
                } else {
                    1.0
                }
            } else {
                1.0
            };
            let eps = y_prev / (k * (0.5 * prev.x).exp());
            p.rho * eps + p.rho_c * zeta
        } else {
            zeta
        };
        SvState { x: p.mu + p.phi * (prev.x - p.mu) + p.sigma_eta * eta, eta }
    }

    fn obs_log_density(&self, p: &SvParams, _t: usize, y_t: f64, s: &SvState) -> f64 {
        if self.contemporaneous() {
            self.mixture_log_density(p, y_t, s.x, p.rho * s.eta, p.rho_c * p.rho_c, p.log_rho_c)
        } else {
            self.mixture_log_density(p, y_t, s.x, 0.0, 1.0, 0.0)
        }
    }

    fn sample_observation<R: Rng + ?Sized>(&self, p: &SvParams, _t: usize, s: &SvState, rng: &mut R) -> f64 {
        let k = if self.omega > 0.0 && rng.random::<f64>() < self.omega { OUTLIER_SCALE } else { 1.0 };
        let nu: f64 = rng.sample(StandardNormal);
        let eps = if self.contemporaneous() { p.rho * s.eta + p.rho_c * nu } else { nu };
        k * (0.5 * s.x).exp() * eps
    }

    fn point_estimate(&self, p: &SvParams, _t: usize, prev: &SvState, _y: &[f64]) -> Option<SvState> {
        Some(SvState { x: p.mu + p.phi * (prev.x - p.mu), eta: 0.0 })
    }

    fn log_obs_bound(&self, _p: &SvParams, _t: usize, y_t: f64) -> Option<f64> {
        if self.contemporaneous() {
            return None;
        }
        // Each normal component N(y; 0, c e^x) peaks at c e^x = y^2 with value
        // (2 pi e y^2)^(-1/2), independent of c; the mixture weights sum to one.
        Some(-0.5 * (LN_2PI + 1.0 + (y_t * y_t).ln()))
    }

    fn state_summary(&self, s: &SvState) -> f64 {
        s.x
    }
}
