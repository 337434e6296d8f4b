//! Marginal likelihood estimates from the IMH proposal: bridge sampling and
//! importance sampling.
//!
//! Both take log unnormalized posterior values `log p(y|theta) + log p(theta)`,
//! where the likelihood may be an unbiased particle estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{derive_seed, log_add_exp, log_mean_exp};
use crate::mixture::GaussianMixture;
use crate::parallel::WorkerPool;
use crate::pmmh::{stream, Target};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("{0} draw set is empty")]
    Empty(&'static str),
    #[error("every bridge term underflowed; choose log U closer to log p(y) (given {0})")]
    Underflow(f64),
    #[error("no usable point for the bridge constant")]
    NoConstant,
}

/// A draw with its log unnormalized posterior and log proposal density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedDraw {
    pub log_target: f64,
    pub log_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_p_bs: f64,
    pub log_p_is: f64,
    pub log_u: f64,
    pub posterior_draws: usize,
    pub q_draws: usize,
    /// True when the bridge constant came from the highest-posterior draw.
    pub u_fallback: bool,
}

/// `log t(theta) = -log(p(theta)/U + q(theta))`.
fn log_bridge(d: &WeightedDraw, log_u: f64) -> f64 {
    -log_add_exp(d.log_target - log_u, d.log_q)
}

/// Bridge estimate `log(A1 / A)` with `A` the posterior mean of `t q` and
/// `A1` the proposal mean of `t p`.
pub fn bridge_evidence(posterior: &[WeightedDraw], proposal: &[WeightedDraw], log_u: f64) -> Result<f64, EvidenceError> {
    if posterior.is_empty() {
        return Err(EvidenceError::Empty("posterior"));
    }
    if proposal.is_empty() {
        return Err(EvidenceError::Empty("proposal"));
    }
    let a: Vec<f64> = posterior.iter().map(|d| log_bridge(d, log_u) + d.log_q).collect();
    let a1: Vec<f64> = proposal.iter().map(|d| log_bridge(d, log_u) + d.log_target).collect();
    let (la, la1) = (log_mean_exp(&a), log_mean_exp(&a1));
    if !la.is_finite() || la1.is_nan() {
        return Err(EvidenceError::Underflow(log_u));
    }
    Ok(la1 - la)
}

/// Importance estimate `log mean exp(log_target - log_q)` over proposal draws.
pub fn importance_evidence(proposal: &[WeightedDraw]) -> Result<f64, EvidenceError> {
    if proposal.is_empty() {
        return Err(EvidenceError::Empty("proposal"));
    }
    let w: Vec<f64> = proposal.iter().map(|d| d.log_target - d.log_q).collect();
    Ok(log_mean_exp(&w))
}

/// Evidence settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceSettings {
    /// Fresh proposal draws; defaults to the number of posterior draws.
    pub q_draws: Option<usize>,
    /// Particles for the likelihood at the bridge constant's point; runs
    /// default to ten times their filter's count.
    pub constant_particles: Option<usize>,
    /// Fraction of the chain discarded before using its draws.
    pub burn_in: f64,
}

impl Default for EvidenceSettings {
    fn default() -> Self {
        Self { q_draws: None, constant_particles: None, burn_in: 0.1 }
    }
}

/// `log U` at the posterior mean, with the likelihood estimated afresh.
/// Falls back to the draw with the highest stored posterior value when the
/// mean is outside the prior support or its estimate is zero.
pub fn default_log_u(
    draws: &[Vec<f64>],
    stored: &[WeightedDraw],
    q: &GaussianMixture,
    target: &Target<'_>,
    seed: u64,
    particles: Option<usize>,
) -> Result<(f64, bool), EvidenceError> {
    if draws.is_empty() {
        return Err(EvidenceError::Empty("posterior"));
    }
    let d = draws[0].len();
    let mean: Vec<f64> = (0..d).map(|k| draws.iter().map(|r| r[k]).sum::<f64>() / draws.len() as f64).collect();
    let lp = target.log_prior(&mean);
    if lp.is_finite() {
        if let Ok(est) = target.likelihood.evaluate(&target.theta(&mean), seed, particles) {
            if est.total.is_finite() {
                return Ok((est.total + lp - q.log_density(&mean), false));
            }
        }
    }
    log::warn!("posterior mean unusable for the bridge constant; using the highest-posterior draw");
    stored
        .iter()
        .filter(|w| w.log_target.is_finite())
        .max_by(|a, b| a.log_target.total_cmp(&b.log_target))
        .map(|w| (w.log_target - w.log_q, true))
        .ok_or(EvidenceError::NoConstant)
}

/// Runs both estimators: posterior draws with their stored values, plus a
/// fresh pass of proposal draws evaluated with new filter seeds.
pub fn estimate_evidence(
    target: &Target<'_>,
    draws: &[Vec<f64>],
    log_targets: &[f64],
    q: &GaussianMixture,
    settings: &EvidenceSettings,
    seed: u64,
    pool: &WorkerPool,
) -> Result<EvidenceEstimate, EvidenceError> {
    let start = ((draws.len() as f64) * settings.burn_in.clamp(0.0, 0.99)) as usize;
    let draws = &draws[start..];
    let log_targets = &log_targets[start..];
    if draws.is_empty() {
        return Err(EvidenceError::Empty("posterior"));
    }
    let posterior: Vec<WeightedDraw> = draws
        .iter()
        .zip(log_targets)
        .map(|(x, &lt)| WeightedDraw { log_target: lt, log_q: q.log_density(x) })
        .collect();
    let k = settings.q_draws.unwrap_or(draws.len()).max(1);
    let base = derive_seed(seed, &[stream::EVIDENCE]);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, &[0]));
    let points: Vec<Vec<f64>> = (0..k).map(|_| q.sample(&mut rng)).collect();
    let proposal: Vec<WeightedDraw> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let ev = target.evaluate(x, derive_seed(base, &[1, i as u64]));
                WeightedDraw { log_target: ev.log_prior + ev.log_lik, log_q: q.log_density(x) }
            })
            .collect()
    });
    let (log_u, u_fallback) =
        default_log_u(draws, &posterior, q, target, derive_seed(base, &[2]), settings.constant_particles)?;
    Ok(EvidenceEstimate {
        log_p_bs: bridge_evidence(&posterior, &proposal, log_u)?,
        log_p_is: importance_evidence(&proposal)?,
        log_u,
        posterior_draws: posterior.len(),
        q_draws: proposal.len(),
        u_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Discrete target on three points with `q` equal to the posterior.
    fn toy() -> (Vec<WeightedDraw>, f64) {
        let unnorm = [0.2f64, 0.5, 0.05];
        let z: f64 = unnorm.iter().sum();
        let draws = unnorm.iter().map(|p| WeightedDraw { log_target: p.ln(), log_q: (p / z).ln() }).collect();
        (draws, z.ln())
    }

    #[test]
    fn exact_proposal_and_constant_recover_evidence() {
        let (d, log_z) = toy();
        let bs = bridge_evidence(&d, &d, log_z).unwrap();
        assert!((bs - log_z).abs() < 1e-12);
        assert!((importance_evidence(&d).unwrap() - log_z).abs() < 1e-12);
    }

    #[test]
    fn stable_for_extreme_log_values() {
        let d: Vec<WeightedDraw> =
            [-600.0, 0.0, 600.0].iter().map(|&v| WeightedDraw { log_target: v, log_q: -v }).collect();
        assert!(bridge_evidence(&d, &d, 0.0).unwrap().is_finite());
        assert!(importance_evidence(&d).unwrap().is_finite());
    }

    #[test]
    fn underflow_reported() {
        let post = vec![WeightedDraw { log_target: -1.0, log_q: f64::NEG_INFINITY }];
        assert!(matches!(bridge_evidence(&post, &post, 0.0), Err(EvidenceError::Underflow(_))));
    }

    #[test]
    fn importance_with_prior_proposal() {
        // q = prior: log_target - log_q = log-likelihood.
        let ll = [-3.0, -1.0, -2.0];
        let d: Vec<WeightedDraw> = ll.iter().map(|&l| WeightedDraw { log_target: l - 0.5, log_q: -0.5 }).collect();
        assert!((importance_evidence(&d).unwrap() - log_mean_exp(&ll)).abs() < 1e-12);
    }
}
