use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    normalize_into, resample_into, weighted_moments, FilterError, FilterOutput, FilterSettings,
    FilteredMoments, LogLikelihoodEstimate,
};
use crate::math::log_add_exp;
use crate::model::StateSpaceModel;
use crate::params::ParameterVector;

/// Auxiliary particle filter with a defensive first-stage density.
///
/// The first stage selects ancestors with masses proportional to
/// `pi_{t-1}^k * g_k`, `g_k = eps * phi_t + (1 - eps) * p(y_t | z_t^k)`. The
/// second stage propagates through the transition and weights by
/// `p(y_t | x_t^k) / g_{a_k}`. The one-step factor
/// `(sum_k pi_{t-1}^k g_k) * (1/M) sum_k w_k` is unbiased; with an equally
/// weighted previous cloud the first factor is the mean of the `g_k`.
pub fn apf_filter<M: StateSpaceModel>(
    model: &M,
    theta: &ParameterVector,
    y: &[f64],
    settings: &FilterSettings,
    with_moments: bool,
) -> Result<FilterOutput, FilterError> {
    settings.validate(y.len())?;
    let p = model.bind(theta)?;
    let m = settings.particles;
    let eps = settings.apf_epsilon;
    let (log_eps, log_one_minus_eps) = (eps.ln(), (1.0 - eps).ln());
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let log_m = (m as f64).ln();

    let mut particles: Vec<M::State> = (0..m).map(|_| model.sample_initial(&p, &mut rng)).collect();
    let mut log_pi = vec![-(m as f64).ln(); m];
    let mut log_g = vec![0.0; m];
    let mut log_first = vec![0.0; m];
    let mut log_w = vec![0.0; m];
    let mut masses = Vec::with_capacity(m);
    let mut ancestors = Vec::with_capacity(m);
    let mut proposed: Vec<M::State> = Vec::with_capacity(m);
    let mut per_step = Vec::with_capacity(y.len());
    let mut moments = with_moments.then(FilteredMoments::default);

    for t in 1..=y.len() {
        let y_t = y[t - 1];
        let log_phi = if eps > 0.0 {
            match model.log_obs_bound(&p, t, y_t) {
                None => {
                    return Err(FilterError::Config(format!(
                        "defensive APF (epsilon = {eps}) needs an observation bound; {} has none",
                        model.name()
                    )))
                }
                Some(b) if !b.is_finite() => {
                    return Err(FilterError::Config(format!(
                        "observation density is unbounded at t = {t} (y = {y_t})"
                    )))
                }
                Some(b) => b,
            }
        } else {
            f64::NEG_INFINITY
        };

        for k in 0..m {
            let z = model.point_estimate(&p, t, &particles[k], y).ok_or_else(|| {
                FilterError::Config(format!("{} supplies no APF point estimate", model.name()))
            })?;
            let lz = model.obs_log_density(&p, t, y_t, &z);
            if lz.is_nan() {
                return Err(FilterError::NumericalFailure { t });
            }
            log_g[k] = if eps == 0.0 {
                lz
            } else if eps == 1.0 {
                log_phi
            } else {
                log_add_exp(log_eps + log_phi, log_one_minus_eps + lz)
            };
            log_first[k] = log_pi[k] + log_g[k];
        }
        let Some(first_factor) = normalize_into(&log_first, &mut masses) else {
            return Ok(FilterOutput {
                estimate: LogLikelihoodEstimate::degenerate(per_step, t),
                moments,
            });
        };
        resample_into(&masses, m, settings.resampling, &mut rng, &mut ancestors)?;

        proposed.clear();
        for (k, &a) in ancestors.iter().enumerate() {
            let x = model.sample_transition(&p, t, &particles[a], y, &mut rng);
            let lp = model.obs_log_density(&p, t, y_t, &x);
            if lp.is_nan() {
                return Err(FilterError::NumericalFailure { t });
            }
            log_w[k] = lp - log_g[a];
            proposed.push(x);
        }
        let Some(lse) = normalize_into(&log_w, &mut masses) else {
            return Ok(FilterOutput {
                estimate: LogLikelihoodEstimate::degenerate(per_step, t),
                moments,
            });
        };
        per_step.push(first_factor + lse - log_m);
        for (lp, lw) in log_pi.iter_mut().zip(&log_w) {
            *lp = lw - lse;
        }
        if let Some(mo) = moments.as_mut() {
            let (mean, var) =
                weighted_moments(proposed.iter().map(|x| model.state_summary(x)), &masses);
            mo.mean.push(mean);
            mo.var.push(var);
        }
        std::mem::swap(&mut particles, &mut proposed);
    }
    Ok(FilterOutput { estimate: LogLikelihoodEstimate::from_steps(per_step), moments })
}
