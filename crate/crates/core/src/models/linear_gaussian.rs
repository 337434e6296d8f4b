use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{normal_log_pdf, LN_2PI};
use crate::model::{ModelError, StateSpaceModel};
use crate::oracle::LinearGaussianSsm;
use crate::params::ParameterVector;

/// Scalar AR(1) state observed in Gaussian noise:
/// `x_t = a x_{t-1} + q eta_t`, `y_t = x_t + r eps_t`, `x_0 ~ N(m0, p0)`.
///
/// Parameters `a`, `q`, `r`; the initial mean and variance are constants.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub m0: f64,
    pub p0: f64,
    defaults: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct LgParams {
    pub a: f64,
    pub q: f64,
    pub r: f64,
}

impl LinearGaussianModel {
    pub fn new(m0: f64, p0: f64) -> Self {
        Self { m0, p0, defaults: [0.9, 0.3, 0.5] }
    }

    pub fn with_defaults(mut self, a: f64, q: f64, r: f64) -> Self {
        self.defaults = [a, q, r];
        self
    }

    /// The exact-likelihood counterpart for a given parameter set.
    pub fn ssm(&self, theta: &ParameterVector) -> Result<LinearGaussianSsm, ModelError> {
        let p = self.bind(theta)?;
        Ok(LinearGaussianSsm { a: p.a, q: p.q, r: p.r, m0: self.m0, p0: self.p0 })
    }
}

impl StateSpaceModel for LinearGaussianModel {
    type State = f64;
    type Params = LgParams;

    fn name(&self) -> &str {
        "linear_gaussian"
    }

    fn template(&self) -> ParameterVector {
        let [a, q, r] = self.defaults;
        ParameterVector::default().with("a", a).with("q", q).with("r", r)
    }

    fn bind(&self, theta: &ParameterVector) -> Result<LgParams, ModelError> {
        let a = theta.value("a")?;
        let q = theta.value("q")?;
        let r = theta.value("r")?;
        for (name, value) in [("q", q), ("r", r)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::OutOfSupport { name: name.into(), value });
            }
        }
        if !a.is_finite() {
            return Err(ModelError::OutOfSupport { name: "a".into(), value: a });
        }
        Ok(LgParams { a, q, r })
    }

    fn sample_initial<R: Rng + ?Sized>(&self, _p: &LgParams, rng: &mut R) -> f64 {
        self.m0 + self.p0.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        p: &LgParams,
        _t: usize,
        prev: &f64,
        _y: &[f64],
        rng: &mut R,
    ) -> f64 {
        p.a * prev + p.q * rng.sample::<f64, _>(StandardNormal)
    }

    fn obs_log_density(&self, p: &LgParams, _t: usize, y_t: f64, x: &f64) -> f64 {
        normal_log_pdf(y_t, *x, p.r)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, p: &LgParams, _t: usize, x: &f64, rng: &mut R) -> f64 {
        x + p.r * rng.sample::<f64, _>(StandardNormal)
    }

    fn point_estimate(&self, p: &LgParams, _t: usize, prev: &f64, _y: &[f64]) -> Option<f64> {
        Some(p.a * prev)
    }

    fn log_obs_bound(&self, p: &LgParams, _t: usize, _y_t: f64) -> Option<f64> {
        Some(-0.5 * LN_2PI - p.r.ln())
    }

    fn state_summary(&self, x: &f64) -> f64 {
        *x
    }
}
