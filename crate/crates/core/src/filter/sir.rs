use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    normalize_into, resample_into, weighted_moments, FilterError, FilterOutput, FilterSettings,
    FilteredMoments, LogLikelihoodEstimate,
};
use crate::model::StateSpaceModel;
use crate::params::ParameterVector;

/// Sampling-importance-resampling (bootstrap) filter.
///
/// Each step propagates the resampled cloud through the transition density,
/// weights by the observation density and records
/// `log((1/M) sum_k p(y_t | x_t^k))`, the unbiased one-step factor.
pub fn sir_filter<M: StateSpaceModel>(
    model: &M,
    theta: &ParameterVector,
    y: &[f64],
    settings: &FilterSettings,
    with_moments: bool,
) -> Result<FilterOutput, FilterError> {
    settings.validate(y.len())?;
    let p = model.bind(theta)?;
    let m = settings.particles;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let log_m = (m as f64).ln();

    let mut particles: Vec<M::State> = (0..m).map(|_| model.sample_initial(&p, &mut rng)).collect();
    let mut predicted: Vec<M::State> = Vec::with_capacity(m);
    let mut log_w = vec![0.0; m];
    let mut masses = Vec::with_capacity(m);
    let mut ancestors = Vec::with_capacity(m);
    let mut per_step = Vec::with_capacity(y.len());
    let mut moments = with_moments.then(FilteredMoments::default);

    for t in 1..=y.len() {
        let y_t = y[t - 1];
        predicted.clear();
        for (k, prev) in particles.iter().enumerate() {
            let x = model.sample_transition(&p, t, prev, y, &mut rng);
            let lw = model.obs_log_density(&p, t, y_t, &x);
            if lw.is_nan() {
                return Err(FilterError::NumericalFailure { t });
            }
            log_w[k] = lw;
            predicted.push(x);
        }
        let Some(lse) = normalize_into(&log_w, &mut masses) else {
            return Ok(FilterOutput {
                estimate: LogLikelihoodEstimate::degenerate(per_step, t),
                moments,
            });
        };
        per_step.push(lse - log_m);
        if let Some(mo) = moments.as_mut() {
            let (mean, var) =
                weighted_moments(predicted.iter().map(|x| model.state_summary(x)), &masses);
            mo.mean.push(mean);
            mo.var.push(var);
        }
        if t < y.len() {
            resample_into(&masses, m, settings.resampling, &mut rng, &mut ancestors)?;
            particles.clear();
            particles.extend(ancestors.iter().map(|&i| predicted[i].clone()));
        }
    }
    Ok(FilterOutput { estimate: LogLikelihoodEstimate::from_steps(per_step), moments })
}
