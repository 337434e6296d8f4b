//! Adaptive independent Metropolis-Hastings proposal built from four
//! Gaussian-mixture terms.
//!
//! `q(theta) = w1 g1 + w2 g2 + w3 g3 + w4 g4`: `g1` is a fixed estimate of
//! the target, `g3` is refitted by EM as the chain runs, and `g2`, `g4` are
//! copies of `g1`, `g3` with covariances inflated ten and twenty times. In
//! stage 2, `g1` is replaced by the last stage-1 `g3`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{fit_mixture, EmError};
use crate::math::log_sum_exp;
use crate::mixture::GaussianMixture;

pub const EARLY_WEIGHTS: [f64; 4] = [0.8, 0.2, 0.0, 0.0];
pub const ADAPTED_WEIGHTS: [f64; 4] = [0.15, 0.05, 0.7, 0.1];
pub const G2_INFLATION: f64 = 10.0;
pub const G4_INFLATION: f64 = 20.0;
pub const MAX_COMPONENTS: usize = 6;
pub const DEFAULT_REFITS: [usize; 10] = [100, 200, 500, 1000, 2000, 3000, 4000, 5000, 6000, 7500];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImhSettings {
    /// Random-walk iterations used to build the initial `g1`.
    pub warmup: usize,
    /// IMH iterations after which `g3` is refitted.
    pub refit_at: Vec<usize>,
    /// Accepted draws per dimension needed for each doubling of `g3`'s size.
    pub growth_per_dim: f64,
    pub max_components: usize,
    /// Refit iteration at which stage 2 starts. Defaults to the first refit at
    /// or after half the run.
    pub stage_two_at: Option<usize>,
    /// Fit on only the most recent iterates when set.
    pub history_window: Option<usize>,
}

impl Default for ImhSettings {
    fn default() -> Self {
        Self {
            warmup: 2000,
            refit_at: DEFAULT_REFITS.to_vec(),
            growth_per_dim: 25.0,
            max_components: MAX_COMPONENTS,
            stage_two_at: None,
            history_window: None,
        }
    }
}

impl ImhSettings {
    /// Stage-2 start for a run of `iterations` IMH iterations, if any.
    pub fn stage_two_start(&self, iterations: usize) -> Option<usize> {
        self.stage_two_at
            .or_else(|| self.refit_at.iter().copied().find(|&r| 2 * r >= iterations && r < iterations))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.refit_at.windows(2).any(|w| w[0] >= w[1]) {
            return Err("refit iterations must be strictly increasing".into());
        }
        if !(self.growth_per_dim > 0.0) || self.max_components == 0 {
            return Err("growth settings must be positive".into());
        }
        if let Some(s) = self.stage_two_at {
            if !self.refit_at.contains(&s) {
                return Err(format!("stage_two_at = {s} is not a refit iteration"));
            }
        }
        Ok(())
    }
}

/// `min(max, 1 + floor(log2(max(1, accepted / (per_dim d)))))`.
pub fn growth_components(accepted: usize, d: usize, per_dim: f64, max: usize) -> usize {
    let ratio = (accepted as f64 / (per_dim * d as f64)).max(1.0);
    (1 + ratio.log2().floor() as usize).min(max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone)]
pub struct ImhState {
    g1: GaussianMixture,
    g2: GaussianMixture,
    adapted: Option<(GaussianMixture, GaussianMixture)>,
    stage: Stage,
    accepted: usize,
    refits: usize,
    failed_refits: usize,
}

impl ImhState {
    pub fn new(g1: GaussianMixture) -> Self {
        let g2 = g1.scaled(G2_INFLATION);
        Self { g1, g2, adapted: None, stage: Stage::One, accepted: 0, refits: 0, failed_refits: 0 }
    }

    pub fn dim(&self) -> usize {
        self.g1.dim()
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn refits(&self) -> usize {
        self.refits
    }

    pub fn failed_refits(&self) -> usize {
        self.failed_refits
    }

    pub fn g1(&self) -> &GaussianMixture {
        &self.g1
    }

    pub fn g2(&self) -> &GaussianMixture {
        &self.g2
    }

    pub fn g3(&self) -> Option<&GaussianMixture> {
        self.adapted.as_ref().map(|a| &a.0)
    }

    pub fn g4(&self) -> Option<&GaussianMixture> {
        self.adapted.as_ref().map(|a| &a.1)
    }

    pub fn weights(&self) -> [f64; 4] {
        if self.adapted.is_some() {
            ADAPTED_WEIGHTS
        } else {
            EARLY_WEIGHTS
        }
    }

    fn term(&self, k: usize) -> &GaussianMixture {
        match k {
            0 => &self.g1,
            1 => &self.g2,
            2 => &self.adapted.as_ref().expect("weight is zero without g3").0,
            _ => &self.adapted.as_ref().expect("weight is zero without g4").1,
        }
    }

    /// Draws from `q`; independent of the chain's current value.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w = self.weights();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = 0;
        for (k, wk) in w.iter().enumerate() {
            if *wk == 0.0 {
                continue;
            }
            pick = k;
            acc += wk;
            if u < acc {
                break;
            }
        }
        self.term(pick).sample(rng)
    }

    /// `log q(theta)` with the current weights.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let w = self.weights();
        let terms: Vec<f64> = (0..4)
            .filter(|&k| w[k] > 0.0)
            .map(|k| w[k].ln() + self.term(k).log_density(theta))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn record(&mut self, accepted: bool) {
        if accepted {
            self.accepted += 1;
        }
    }

    /// Refits `g3` (and `g4`) on `iterates`. On failure the previous terms are
    /// kept and the error is returned for logging.
    pub fn refit<R: Rng + ?Sized>(
        &mut self,
        iterates: &[Vec<f64>],
        settings: &ImhSettings,
        rng: &mut R,
    ) -> Result<usize, EmError> {
        let start = settings.history_window.map_or(0, |w| iterates.len().saturating_sub(w));
        let data = &iterates[start..];
        let k = growth_components(self.accepted, self.dim(), settings.growth_per_dim, settings.max_components);
        match fit_mixture(data, k, rng) {
            Ok(fit) => {
                let g4 = fit.mixture.scaled(G4_INFLATION);
                let n = fit.mixture.len();
                self.adapted = Some((fit.mixture, g4));
                self.refits += 1;
                Ok(n)
            }
            Err(e) => {
                self.failed_refits += 1;
                log::warn!("mixture refit failed ({e}); keeping the previous proposal");
                Err(e)
            }
        }
    }

    /// The whole proposal as a single flat mixture.
    pub fn as_mixture(&self) -> GaussianMixture {
        let w = self.weights();
        let mut parts = Vec::new();
        for k in (0..4).filter(|&k| w[k] > 0.0) {
            for c in self.term(k).components() {
                parts.push((w[k] * c.weight, c.mean.clone(), c.cov.clone()));
            }
        }
        GaussianMixture::new(parts).expect("terms are valid mixtures")
    }

    /// Replaces `g1` by the current `g3` and rebuilds `g2`. A no-op without `g3`.
    pub fn enter_stage_two(&mut self) {
        if let Some((g3, _)) = &self.adapted {
            self.g1 = g3.clone();
            self.g2 = self.g1.scaled(G2_INFLATION);
            self.stage = Stage::Two;
        }
    }
}
