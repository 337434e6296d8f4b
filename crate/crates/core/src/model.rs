//! The state-space model abstraction consumed by the particle filters.
//!
//! Time indices are 1-based: `y[t - 1]` is the observation at time `t`, the
//! initial state is `x_0`, and `sample_transition(.., t, ..)` draws `x_t`
//! given `x_{t-1}`.

use rand::Rng;
use thiserror::Error;

use crate::params::{ParamError, ParameterVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("parameter `{name}` = {value} is outside the model's support")]
    OutOfSupport { name: String, value: f64 },
    #[error("model configuration: {0}")]
    Config(String),
}

/// A state-space model with an analytic observation density and a
/// simulable transition.
pub trait StateSpaceModel: Send + Sync {
    type State: Clone + Send + Sync;
    /// Parameters resolved from a `ParameterVector` once per filter run.
    type Params: Send + Sync;

    fn name(&self) -> &str;

    /// Parameter names in canonical order, with default values and fixed flags.
    fn template(&self) -> ParameterVector;

    fn bind(&self, theta: &ParameterVector) -> Result<Self::Params, ModelError>;

    fn sample_initial<R: Rng + ?Sized>(&self, p: &Self::Params, rng: &mut R) -> Self::State;

    /// Draws `x_t` given `x_{t-1}`. `y` is the full series; implementations may
    /// read only `y[..t - 1]`.
    fn sample_transition<R: Rng + ?Sized>(
        &self,
        p: &Self::Params,
        t: usize,
        prev: &Self::State,
        y: &[f64],
        rng: &mut R,
    ) -> Self::State;

    /// `log p(y_t | x_t; theta)`.
    fn obs_log_density(&self, p: &Self::Params, t: usize, y_t: f64, x: &Self::State) -> f64;

    fn sample_observation<R: Rng + ?Sized>(
        &self,
        p: &Self::Params,
        t: usize,
        x: &Self::State,
        rng: &mut R,
    ) -> f64;

    /// Point estimate `z_t(x_{t-1})` for the auxiliary particle filter; the
    /// conditional mean of the transition unless a model says otherwise.
    fn point_estimate(
        &self,
        _p: &Self::Params,
        _t: usize,
        _prev: &Self::State,
        _y: &[f64],
    ) -> Option<Self::State> {
        None
    }

    /// `log phi_t`, an upper bound on `p(y_t | x_t; theta)` over all states.
    /// Must not depend on the free parameters for the convergence guarantee to
    /// apply. `+inf` means no finite bound exists for this observation.
    fn log_obs_bound(&self, _p: &Self::Params, _t: usize, _y_t: f64) -> Option<f64> {
        None
    }

    /// Scalar summary of a state used for filtered moments (e.g. log-volatility).
    fn state_summary(&self, x: &Self::State) -> f64;

    /// Count-valued observations (rejects non-integer data).
    fn count_data(&self) -> bool {
        false
    }
}

/// Simulates `(states x_1..x_T, observations y_1..y_T)` from the generative model.
pub fn simulate<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    horizon: usize,
    rng: &mut R,
) -> Result<(Vec<M::State>, Vec<f64>), ModelError> {
    let p = model.bind(theta)?;
    let mut y = Vec::with_capacity(horizon);
    let mut states = Vec::with_capacity(horizon);
    let mut x = model.sample_initial(&p, rng);
    for t in 1..=horizon {
        x = model.sample_transition(&p, t, &x, &y, rng);
        let obs = model.sample_observation(&p, t, &x, rng);
        y.push(obs);
        states.push(x.clone());
    }
    Ok((states, y))
}

/// Largest observed `log p(y_t|x_t) - log phi_t` over `draws` random
/// `(t, x_t, theta)` triples: non-positive when the bound holds.
pub fn max_bound_excess<M, R, F, G>(
    model: &M,
    y: &[f64],
    draws: usize,
    mut draw_theta: F,
    mut draw_state: G,
    rng: &mut R,
) -> Result<f64, ModelError>
where
    M: StateSpaceModel,
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> ParameterVector,
    G: FnMut(&mut R) -> M::State,
{
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..draws {
        let theta = draw_theta(rng);
        let p = model.bind(&theta)?;
        let t = rng.random_range(1..=y.len());
        let x = draw_state(rng);
        let bound = model
            .log_obs_bound(&p, t, y[t - 1])
            .ok_or_else(|| ModelError::Config(format!("{} supplies no bound", model.name())))?;
        let excess = model.obs_log_density(&p, t, y[t - 1], &x) - bound;
        if excess.is_nan() {
            return Err(ModelError::Config(format!("NaN density at t = {t}")));
        }
        worst = worst.max(excess);
    }
    Ok(worst)
}
