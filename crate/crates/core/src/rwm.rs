//! Three-component adaptive random-walk Metropolis proposal.
//!
//! `q_j(. | theta) = w1 N(theta, k1 S1) + w2 N(theta, k2 S2j) + w3 N(theta, k3 S2j)`
//! with a fixed `S1`, `S2j` the sample covariance of the chain iterates so
//! far, weights `(1, 0, 0)` for `j <= j0` and `(0.05, 0.90, 0.05)` after.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{log_sum_exp, LN_2PI};

pub const DEFAULT_J0: usize = 500;
pub const LATE_WEIGHTS: [f64; 3] = [0.05, 0.90, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RwmSettings {
    /// Iterations that use only the fixed component.
    pub j0: usize,
    /// Overrides for `(k1, k2, k3)`.
    pub kappa: Option<[f64; 3]>,
    /// Diagonal of the fixed covariance `S1`; defaults to prior scale variances.
    pub sigma1_diag: Option<Vec<f64>>,
}

impl Default for RwmSettings {
    fn default() -> Self {
        Self { j0: DEFAULT_J0, kappa: None, sigma1_diag: None }
    }
}

/// `(0.1^2/d, 2.38^2/d, 25)`.
pub fn default_kappa(d: usize) -> [f64; 3] {
    let d = d as f64;
    [0.01 / d, 2.38 * 2.38 / d, 25.0]
}

/// Component weights for iteration `j` (1-based).
pub fn rwm_weights(j: usize, j0: usize) -> [f64; 3] {
    if j <= j0 {
        [1.0, 0.0, 0.0]
    } else {
        LATE_WEIGHTS
    }
}

#[derive(Debug, Clone)]
pub struct RwmState {
    d: usize,
    j0: usize,
    kappa: [f64; 3],
    chol1: DMatrix<f64>,
    log_det1: f64,
    /// Welford accumulators over the chain iterates.
    count: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    /// Cholesky factor of `S2j` when it exists.
    chol2: Option<(DMatrix<f64>, f64)>,
    fallbacks: usize,
}

impl RwmState {
    /// `sigma1` must be positive definite.
    pub fn new(sigma1: DMatrix<f64>, j0: usize, kappa: Option<[f64; 3]>) -> Option<Self> {
        let d = sigma1.nrows();
        let chol1 = sigma1.cholesky()?.l();
        let log_det1 = 2.0 * chol1.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(Self {
            d,
            j0,
            kappa: kappa.unwrap_or_else(|| default_kappa(d)),
            chol1,
            log_det1,
            count: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
            chol2: None,
            fallbacks: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kappa(&self) -> [f64; 3] {
        self.kappa
    }

    /// Index of the next proposal (1-based): one more than the number of
    /// recorded iterates.
    pub fn iteration(&self) -> usize {
        self.count + 1
    }

    /// Proposals that wanted an adaptive component but had to use the fixed one.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Sample covariance of the recorded iterates (divisor `n - 1`).
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.d, self.d);
        }
        &self.scatter / (self.count - 1) as f64
    }

    pub fn weights(&self) -> [f64; 3] {
        rwm_weights(self.iteration(), self.j0)
    }

    /// Records a chain iterate.
    pub fn update(&mut self, theta: &[f64]) {
        let x = DVector::from_column_slice(theta);
        self.count += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.scatter.ger(1.0, &delta, &delta2, 1.0);
        self.chol2 = None;
        if self.iteration() > self.j0 && self.count > self.d {
            let cov = self.covariance();
            let cov = (&cov + cov.transpose()) * 0.5;
            if let Some(c) = cov.cholesky() {
                let l = c.l();
                let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                if log_det.is_finite() {
                    self.chol2 = Some((l, log_det));
                }
            }
        }
    }

    /// Draws a proposal around `current` and returns it with the component used
    /// (0-based). Consumes one uniform and `d` normals regardless of the branch.
    pub fn propose<R: Rng + ?Sized>(&mut self, current: &[f64], rng: &mut R) -> (Vec<f64>, usize) {
        let w = self.weights();
        let u: f64 = rng.random();
        let mut comp = if u < w[0] {
            0
        } else if u < w[0] + w[1] {
            1
        } else {
            2
        };
        let z = DVector::from_fn(self.d, |_, _| rng.sample::<f64, _>(StandardNormal));
        if comp > 0 && self.chol2.is_none() {
            if self.fallbacks == 0 {
                log::warn!("adaptive covariance not positive definite; using the fixed component");
            }
            self.fallbacks += 1;
            comp = 0;
        }
        let step = match (comp, &self.chol2) {
            (0, _) | (_, None) => &self.chol1 * z * self.kappa[0].sqrt(),
            (c, Some((l, _))) => l * z * self.kappa[c].sqrt(),
        };
        let x = DVector::from_column_slice(current) + step;
        (x.iter().copied().collect(), comp)
    }

    /// `log q(to | from)` for the current state; symmetric in its arguments.
    pub fn log_proposal_density(&self, from: &[f64], to: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(to) - DVector::from_column_slice(from);
        let d = self.d as f64;
        let gauss = |l: &DMatrix<f64>, log_det: f64, kappa: f64| {
            let z = l.solve_lower_triangular(&diff).expect("positive diagonal");
            -0.5 * (d * LN_2PI + log_det + d * kappa.ln() + z.norm_squared() / kappa)
        };
        let mut w = self.weights();
        if self.chol2.is_none() {
            w = [1.0, 0.0, 0.0];
        }
        let mut terms = vec![w[0].ln() + gauss(&self.chol1, self.log_det1, self.kappa[0])];
        if let Some((l, ld)) = &self.chol2 {
            for c in 1..3 {
                if w[c] > 0.0 {
                    terms.push(w[c].ln() + gauss(l, *ld, self.kappa[c]));
                }
            }
        }
        log_sum_exp(&terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_scales_in_four_dimensions() {
        let k = default_kappa(4);
        assert!((k[0] - 0.0025).abs() < 1e-15);
        assert!((k[1] - 1.4161).abs() < 1e-12);
        assert_eq!(k[2], 25.0);
    }

    #[test]
    fn weight_schedule() {
        assert_eq!(rwm_weights(1, 500), [1.0, 0.0, 0.0]);
        assert_eq!(rwm_weights(500, 500), [1.0, 0.0, 0.0]);
        assert_eq!(rwm_weights(501, 500), LATE_WEIGHTS);
    }

    #[test]
    fn two_iterates_mean_and_variance() {
        let mut s = RwmState::new(DMatrix::identity(1, 1), 500, None).unwrap();
        s.update(&[0.0]);
        s.update(&[2.0]);
        assert_eq!(s.mean()[0], 1.0);
        assert_eq!(s.covariance()[(0, 0)], 2.0);
    }

    #[test]
    fn early_proposal_variance() {
        let mut s = RwmState::new(DMatrix::identity(1, 1), 500, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.propose(&[0.0], &mut rng).0[0]).collect();
        let var = crate::math::sample_variance(&draws);
        assert!((var - 0.01).abs() < 0.0005, "{var}");
    }

    #[test]
    fn running_covariance_of_iid_normals() {
        let mut s = RwmState::new(DMatrix::identity(3, 3), 0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            s.update(&x);
        }
        assert!((s.covariance() - DMatrix::<f64>::identity(3, 3)).norm() < 0.1);
    }

    #[test]
    fn constant_iterates_fall_back() {
        let mut s = RwmState::new(DMatrix::identity(2, 2), 0, None).unwrap();
        for _ in 0..10 {
            s.update(&[1.0, 1.0]);
        }
        assert_eq!(s.covariance(), DMatrix::zeros(2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(s.propose(&[1.0, 1.0], &mut rng).1, 0);
        }
        assert!(s.fallbacks() > 0);
    }

    #[test]
    fn proposal_density_is_symmetric() {
        let mut s = RwmState::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]), 5, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            s.update(&x);
        }
        for _ in 0..100 {
            let a: Vec<f64> = (0..2).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..2).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let (f, r) = (s.log_proposal_density(&a, &b), s.log_proposal_density(&b, &a));
            assert!((f - r).abs() < 1e-12);
        }
    }
}
