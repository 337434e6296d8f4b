//! Poisson-gamma state-space model reduced to negative-binomial transitions:
//!
//! ```text
//! z_0 ~ NB(nu, beta / (alpha + beta))
//! z_t | z_{t-1} ~ NB(nu + z_{t-1}, (alpha + beta) / (2 alpha + beta))
//! y_t | z_t ~ NB(nu + z_t, (alpha + beta) / (alpha + beta + 1))
//! ```
//!
//! `NB(r, p)` has pmf `Gamma(y + r) / (Gamma(r) y!) p^r (1 - p)^y`. The latent
//! count is stored as an `f64` holding an integer value.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::model::{ModelError, StateSpaceModel};
use crate::params::ParameterVector;

#[derive(Debug, Clone, Default)]
pub struct NegBinModel;

#[derive(Debug, Clone, Copy)]
pub struct NegBinParams {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    p_init: f64,
    p_trans: f64,
    ln_p_obs: f64,
    ln_q_obs: f64,
}

/// `log NB(y; r, p)` for integer-valued `y >= 0`.
pub fn nb_log_pmf(y: f64, r: f64, p: f64) -> f64 {
    if y < 0.0 || y.fract() != 0.0 {
        return f64::NEG_INFINITY;
    }
    nb_log_pmf_parts(y, r, p.ln(), (1.0 - p).ln())
}

fn nb_log_pmf_parts(y: f64, r: f64, ln_p: f64, ln_q: f64) -> f64 {
    if y == 0.0 {
        return r * ln_p;
    }
    ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) + r * ln_p + y * ln_q
}

/// Draws from `NB(r, p)` as a gamma-mixed Poisson.
pub fn sample_nb<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> f64 {
    let scale = (1.0 - p) / p;
    let lambda = Gamma::new(r, scale).expect("positive gamma parameters").sample(rng);
    sample_poisson(lambda, rng)
}

/// Poisson draw that tolerates a zero or astronomically large rate.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    if !(lambda > 0.0) {
        return 0.0;
    }
    if lambda > 1e15 {
        return lambda.round();
    }
    Poisson::new(lambda).expect("finite positive rate").sample(rng)
}

impl StateSpaceModel for NegBinModel {
    type State = f64;
    type Params = NegBinParams;

    fn name(&self) -> &str {
        "negbin"
    }

    fn template(&self) -> ParameterVector {
        ParameterVector::default().with("nu", 5.0).with("alpha", 5.0).with("beta", 1.0)
    }

    fn bind(&self, theta: &ParameterVector) -> Result<NegBinParams, ModelError> {
        let nu = theta.value("nu")?;
        let alpha = theta.value("alpha")?;
        let beta = theta.value("beta")?;
        for (name, value) in [("nu", nu), ("alpha", alpha), ("beta", beta)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::OutOfSupport { name: name.into(), value });
            }
        }
        let s = alpha + beta;
        Ok(NegBinParams {
            nu,
            alpha,
            beta,
            p_init: beta / s,
            p_trans: s / (2.0 * alpha + beta),
            ln_p_obs: (s / (s + 1.0)).ln(),
            ln_q_obs: -(s + 1.0).ln(),
        })
    }

    fn sample_initial<R: Rng + ?Sized>(&self, p: &NegBinParams, rng: &mut R) -> f64 {
        sample_nb(p.nu, p.p_init, rng)
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        p: &NegBinParams,
        _t: usize,
        prev: &f64,
        _y: &[f64],
        rng: &mut R,
    ) -> f64 {
        sample_nb(p.nu + prev, p.p_trans, rng)
    }

    fn obs_log_density(&self, p: &NegBinParams, _t: usize, y_t: f64, z: &f64) -> f64 {
        if y_t < 0.0 || y_t.fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        nb_log_pmf_parts(y_t, p.nu + z, p.ln_p_obs, p.ln_q_obs)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, p: &NegBinParams, _t: usize, z: &f64, rng: &mut R) -> f64 {
        sample_nb(p.nu + z, p.ln_p_obs.exp(), rng)
    }

    fn point_estimate(&self, p: &NegBinParams, _t: usize, prev: &f64, _y: &[f64]) -> Option<f64> {
        // Transition mean (nu + z)(1 - p)/p; non-integer values are fine for
        // the pmf's gamma functions.
        Some((p.nu + prev) * p.alpha / (p.alpha + p.beta))
    }

    fn log_obs_bound(&self, _p: &NegBinParams, _t: usize, _y_t: f64) -> Option<f64> {
        Some(0.0)
    }

    fn state_summary(&self, z: &f64) -> f64 {
        *z
    }

    fn count_data(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pmf_sums_to_one() {
        let (nu, alpha, beta) = (25.0, 1.0, 1.0);
        let p = (alpha + beta) / (alpha + beta + 1.0);
        let total: f64 = (0..5000).map(|y| nb_log_pmf(y as f64, nu, p).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn unit_size_is_geometric() {
        let p: f64 = 0.3;
        for y in 0..20 {
            let closed = p * (1.0 - p).powi(y);
            assert!((nb_log_pmf(y as f64, 1.0, p).exp() - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn sampler_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, p) = (4.0, 0.4);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_nb(r, p, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let expected = r * (1.0 - p) / p;
        let var = r * (1.0 - p) / (p * p);
        assert!((mean - expected).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {expected}");
    }

    #[test]
    fn bound_holds() {
        let m = NegBinModel;
        let p = m.bind(&m.template()).unwrap();
        for y in 0..50 {
            for z in 0..50 {
                assert!(m.obs_log_density(&p, 1, y as f64, &(z as f64)) <= 0.0);
            }
        }
    }
}
