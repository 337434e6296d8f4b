//! Independent per-parameter priors.
//!
//! Notation follows the usual conventions: `Normal { mean, sd }`, a truncated
//! normal with location/scale restricted to `(lo, hi)` (normalizing constant
//! included), an inverse gamma with shape `a` and scale `b` (mode `b/(a+1)`),
//! and a half normal with scale `b`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::math::{normal_log_pdf, std_normal_cdf, std_normal_interval};
use crate::params::ParameterVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("free parameter `{0}` has no prior")]
    MissingPrior(String),
    #[error("prior declared for unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("invalid prior for `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    TruncNormal { loc: f64, scale: f64, lo: f64, hi: f64 },
    InverseGamma { shape: f64, scale: f64 },
    HalfNormal { scale: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Prior::Normal { sd, .. } => sd > 0.0,
            Prior::TruncNormal { scale, lo, hi, .. } => scale > 0.0 && lo < hi,
            Prior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Prior::HalfNormal { scale } => scale > 0.0,
            Prior::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            Prior::PointMass { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("bad hyperparameters in {self:?}"))
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match *self {
            Prior::Normal { .. } => true,
            Prior::TruncNormal { lo, hi, .. } | Prior::Uniform { lo, hi } => lo < x && x < hi,
            Prior::InverseGamma { .. } | Prior::HalfNormal { .. } => x > 0.0,
            Prior::PointMass { value } => x == value,
        }
    }

    /// Log density; exactly `-inf` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::Normal { mean, sd } => normal_log_pdf(x, mean, sd),
            Prior::TruncNormal { loc, scale, lo, hi } => {
                let z = std_normal_interval((lo - loc) / scale, (hi - loc) / scale);
                normal_log_pdf(x, loc, scale) - z.ln()
            }
            Prior::InverseGamma { shape, scale } => {
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::HalfNormal { scale } => std::f64::consts::LN_2 + normal_log_pdf(x, 0.0, scale),
            Prior::Uniform { lo, hi } => -(hi - lo).ln(),
            Prior::PointMass { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            Prior::TruncNormal { loc, scale, lo, hi } => {
                loc + scale * sample_std_trunc_normal((lo - loc) / scale, (hi - loc) / scale, rng)
            }
            Prior::InverseGamma { shape, scale } => {
                let g = Gamma::new(shape, 1.0 / scale).expect("validated").sample(rng);
                1.0 / g
            }
            Prior::HalfNormal { scale } => (scale * rng.sample::<f64, _>(StandardNormal)).abs(),
            Prior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Prior::PointMass { value } => value,
        }
    }

    /// A finite variance-like scale used to size default random-walk steps.
    /// Uses the prior variance when it exists and the squared mode otherwise.
    pub fn scale_variance(&self) -> f64 {
        match *self {
            Prior::Normal { sd, .. } => sd * sd,
            Prior::TruncNormal { loc, scale, lo, hi } => {
                let (a, b) = ((lo - loc) / scale, (hi - loc) / scale);
                let z = std_normal_interval(a, b);
                let pdf = |u: f64| {
                    if u.is_finite() {
                        (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
                    } else {
                        0.0
                    }
                };
                let ua = if a.is_finite() { a * pdf(a) } else { 0.0 };
                let ub = if b.is_finite() { b * pdf(b) } else { 0.0 };
                let m = (pdf(a) - pdf(b)) / z;
                let v = scale * scale * (1.0 + (ua - ub) / z - m * m);
                if v.is_finite() && v > 0.0 {
                    v
                } else {
                    ((hi - lo) / 4.0).powi(2)
                }
            }
            Prior::InverseGamma { shape, scale } => {
                if shape > 2.0 {
                    scale * scale / ((shape - 1.0).powi(2) * (shape - 2.0))
                } else {
                    (scale / (shape + 1.0)).powi(2)
                }
            }
            Prior::HalfNormal { scale } => scale * scale * (1.0 - 2.0 / std::f64::consts::PI),
            Prior::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Prior::PointMass { .. } => 0.0,
        }
    }
}

/// Standard normal truncated to `(a, b)`: inverse CDF in the body, exponential
/// rejection in the far tails where the CDF saturates.
fn sample_std_trunc_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a > 5.0 {
        return tail_sample(a, b, rng);
    }
    if b < -5.0 {
        return -tail_sample(-b, -a, rng);
    }
    let fa = std_normal_cdf(a);
    let fb = std_normal_cdf(b);
    loop {
        let u = fa + (fb - fa) * rng.random::<f64>();
        let x = inverse_std_normal_cdf(u);
        if x > a && x < b {
            return x;
        }
    }
}

fn tail_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = a + e / a;
        if x < b && rng.random::<f64>() < (-0.5 * (x - a) * (x - a)).exp() {
            return x;
        }
    }
}

fn inverse_std_normal_cdf(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

/// Collection of independent priors keyed by parameter name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub priors: BTreeMap<String, Prior>,
}

impl PriorSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, prior: Prior) -> Self {
        self.priors.insert(name.to_string(), prior);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Prior> {
        self.priors.get(name)
    }

    /// Checks that the prior and the parameter set describe the same free
    /// parameters and that every hyperparameter is valid.
    pub fn check(&self, theta: &ParameterVector) -> Result<(), PriorError> {
        for (name, prior) in &self.priors {
            if theta.index_of(name).is_none() {
                return Err(PriorError::UnknownParameter(name.clone()));
            }
            prior
                .validate()
                .map_err(|reason| PriorError::Invalid { name: name.clone(), reason })?;
        }
        for p in theta.entries().iter().filter(|p| !p.fixed) {
            if !self.priors.contains_key(&p.name) {
                return Err(PriorError::MissingPrior(p.name.clone()));
            }
        }
        Ok(())
    }

    /// Sum of the free parameters' log densities. Fixed entries contribute
    /// nothing.
    pub fn log_prior(&self, theta: &ParameterVector) -> Result<f64, PriorError> {
        self.check(theta)?;
        Ok(self.log_prior_unchecked(theta))
    }

    /// `log_prior` without the name checks, for hot loops after a single
    /// `check`.
    pub fn log_prior_unchecked(&self, theta: &ParameterVector) -> f64 {
        let mut total = 0.0;
        for p in theta.entries().iter().filter(|p| !p.fixed) {
            let lp = self.priors[&p.name].log_density(p.value);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += lp;
        }
        total
    }

    /// Replaces the free entries of `template` by prior draws.
    pub fn sample<R: Rng + ?Sized>(&self, template: &ParameterVector, rng: &mut R) -> ParameterVector {
        let mut out = template.clone();
        for name in template.free_names() {
            let v = self.priors[&name].sample(rng);
            out.set(&name, v).expect("name from template");
        }
        out
    }

    /// Diagonal of the default fixed random-walk covariance, in free-parameter order.
    pub fn scale_variances(&self, template: &ParameterVector) -> Vec<f64> {
        template
            .free_names()
            .iter()
            .map(|n| self.priors[n].scale_variance())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_at_mean() {
        let theta = ParameterVector::default().with("mu", 0.0);
        let spec = PriorSpec::new().with("mu", Prior::Normal { mean: 0.0, sd: 10.0 });
        let lp = spec.log_prior(&theta).unwrap();
        let expected = (1.0 / (10.0 * (2.0 * std::f64::consts::PI).sqrt())).ln();
        assert!((lp - expected).abs() < 1e-14);
    }

    #[test]
    fn truncated_outside_support() {
        let theta = ParameterVector::default().with("phi", 1.5);
        let spec = PriorSpec::new().with(
            "phi",
            Prior::TruncNormal { loc: 0.9, scale: 0.1, lo: 0.0, hi: 1.0 },
        );
        assert_eq!(spec.log_prior(&theta).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_gamma_matches_textbook_density() {
        // Density b^a / Gamma(a) x^(-a-1) exp(-b/x), evaluated on the raw scale.
        let (a, b, x): (f64, f64, f64) = (0.01, 0.01, 0.01);
        let gamma_a = statrs::function::gamma::gamma(a);
        let direct = b.powf(a) / gamma_a * x.powf(-a - 1.0) * (-b / x).exp();
        let lp = Prior::InverseGamma { shape: a, scale: b }.log_density(x);
        assert!((lp - direct.ln()).abs() < 1e-10, "{lp} vs {}", direct.ln());
    }

    #[test]
    fn inverse_gamma_mode() {
        let p = Prior::InverseGamma { shape: 3.0, scale: 2.0 };
        let mode = 2.0 / 4.0;
        assert!(p.log_density(mode) > p.log_density(mode * 1.01));
        assert!(p.log_density(mode) > p.log_density(mode * 0.99));
    }

    #[test]
    fn truncated_normal_integrates_to_one() {
        for (lo, hi, loc, scale) in [(0.0, 1.0, 0.9, 0.1), (-1.0, 1.0, 0.0, 1e6)] {
            let p = Prior::TruncNormal { loc, scale, lo, hi };
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let s: f64 = (0..n).map(|i| p.log_density(lo + (i as f64 + 0.5) * h).exp() * h).sum();
            assert!((s - 1.0).abs() < 1e-6, "{p:?}: {s}");
        }
    }

    #[test]
    fn half_normal_integrates_to_one() {
        let p = Prior::HalfNormal { scale: 5.0 };
        let n = 400_000;
        let h = 60.0 / n as f64;
        let s: f64 = (0..n).map(|i| p.log_density((i as f64 + 0.5) * h).exp() * h).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn name_mismatch_is_configuration_error() {
        let theta = ParameterVector::default().with("mu", 0.0);
        let spec = PriorSpec::new().with("nu", Prior::Normal { mean: 0.0, sd: 1.0 });
        assert!(matches!(spec.log_prior(&theta), Err(PriorError::UnknownParameter(_))));
        let spec = PriorSpec::new();
        assert!(matches!(spec.log_prior(&theta), Err(PriorError::MissingPrior(_))));
    }

    #[test]
    fn samples_stay_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let priors = [
            Prior::TruncNormal { loc: 0.9, scale: 0.1, lo: 0.0, hi: 1.0 },
            Prior::TruncNormal { loc: 0.0, scale: 1e6, lo: -1.0, hi: 1.0 },
            Prior::TruncNormal { loc: 0.0, scale: 1.0, lo: 8.0, hi: 9.0 },
            Prior::TruncNormal { loc: 0.0, scale: 1.0, lo: -9.0, hi: -8.0 },
            Prior::HalfNormal { scale: 2.0 },
            Prior::InverseGamma { shape: 3.0, scale: 1.0 },
            Prior::Uniform { lo: -1.0, hi: 1.0 },
        ];
        for p in priors {
            for _ in 0..2000 {
                let x = p.sample(&mut rng);
                assert!(p.in_support(x), "{p:?} drew {x}");
            }
        }
    }

    #[test]
    fn truncated_normal_sample_mean() {
        // Mean of N(0.9, 0.1^2) truncated to (0, 1): 0.9 + 0.1 (phi(-9) - phi(1)) / (Phi(1) - Phi(-9)).
        let p = Prior::TruncNormal { loc: 0.9, scale: 0.1, lo: 0.0, hi: 1.0 };
        let pdf = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let exact = 0.9 + 0.1 * (pdf(-9.0) - pdf(1.0)) / std_normal_interval(-9.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        let sd = p.scale_variance().sqrt();
        assert!((m - exact).abs() < 4.0 * sd / (n as f64).sqrt(), "{m} vs {exact}");
    }
}
