//! Multivariate Gaussian mixtures with cached Cholesky factors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_sum_exp, LN_2PI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MixtureError {
    #[error("mixture needs at least one component")]
    Empty,
    #[error("component {0} has a non-positive or non-finite weight")]
    Weight(usize),
    #[error("component {0} covariance is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("component {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    /// `log weight - 0.5 (d log 2 pi + log det cov)`.
    log_const: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>, index: usize) -> Result<Self, MixtureError> {
        let chol = cov.clone().cholesky().ok_or(MixtureError::NotPositiveDefinite(index))?.l();
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(MixtureError::NotPositiveDefinite(index));
        }
        let d = mean.len() as f64;
        Ok(Self { weight, mean, cov, chol, log_const: weight.ln() - 0.5 * (d * LN_2PI + log_det) })
    }

    /// `log(weight * N(x; mean, cov))`.
    pub fn log_weighted_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_const - 0.5 * z.norm_squared()
    }
}

/// `sum_k w_k N(mean_k, cov_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Component>,
    dim: usize,
}

/// Plain-data form used for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major covariance matrices.
    pub covariances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    /// Builds a mixture; weights are renormalized to sum to one.
    pub fn new(parts: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<Self, MixtureError> {
        if parts.is_empty() {
            return Err(MixtureError::Empty);
        }
        let dim = parts[0].1.len();
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let mut components = Vec::with_capacity(parts.len());
        for (i, (w, mean, cov)) in parts.into_iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(MixtureError::Weight(i));
            }
            for got in [mean.len(), cov.nrows(), cov.ncols()] {
                if got != dim {
                    return Err(MixtureError::Dimension { index: i, expected: dim, got });
                }
            }
            components.push(Component::new(w / total, mean, cov, i)?);
        }
        Ok(Self { components, dim })
    }

    pub fn single(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, MixtureError> {
        Self::new(vec![(1.0, mean, cov)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Same weights and means with every covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let d = self.dim as f64;
        let components = self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                mean: c.mean.clone(),
                cov: &c.cov * factor,
                chol: &c.chol * factor.sqrt(),
                log_const: c.log_const - 0.5 * d * factor.ln(),
            })
            .collect();
        Self { components, dim: self.dim }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let terms: Vec<f64> = self.components.iter().map(|c| c.log_weighted_density(&x)).collect();
        log_sum_exp(&terms)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = &self.components[pick];
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&c.mean + &c.chol * z).iter().copied().collect()
    }

    pub fn to_record(&self) -> MixtureRecord {
        MixtureRecord {
            weights: self.components.iter().map(|c| c.weight).collect(),
            means: self.components.iter().map(|c| c.mean.iter().copied().collect()).collect(),
            covariances: self.components.iter().map(|c| c.cov.transpose().iter().copied().collect()).collect(),
        }
    }

    pub fn from_record(r: &MixtureRecord) -> Result<Self, MixtureError> {
        let parts = r
            .weights
            .iter()
            .zip(&r.means)
            .zip(&r.covariances)
            .map(|((w, m), c)| {
                let d = m.len();
                (*w, DVector::from_column_slice(m), DMatrix::from_row_slice(d, d, c))
            })
            .collect();
        Self::new(parts)
    }
}

/// Sample mean and covariance (divisor `n - 1`) of row vectors.
pub fn sample_moments(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let diff = DVector::from_column_slice(r) - &mean;
        cov += &diff * diff.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normal_log_pdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_component_density_at_zero() {
        let m = GaussianMixture::new(vec![
            (0.5, DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0)),
            (0.5, DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 100.0)),
        ])
        .unwrap();
        let expected = (0.5 * (normal_log_pdf(0.0, 0.0, 1.0).exp() + normal_log_pdf(0.0, 0.0, 10.0).exp())).ln();
        assert!((m.log_density(&[0.0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn scaled_matches_rebuilt() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let m = GaussianMixture::single(DVector::from_vec(vec![1.0, -1.0]), cov.clone()).unwrap();
        let direct = GaussianMixture::single(DVector::from_vec(vec![1.0, -1.0]), cov * 10.0).unwrap();
        let s = m.scaled(10.0);
        for x in [[0.0, 0.0], [2.0, 1.0], [-3.0, 0.5]] {
            assert!((s.log_density(&x) - direct.log_density(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_covariance_matches() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let m = GaussianMixture::single(DVector::from_vec(vec![1.0, -1.0]), cov.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<Vec<f64>> = (0..50_000).map(|_| m.sample(&mut rng)).collect();
        let (mean, c) = sample_moments(&draws);
        assert!((mean[0] - 1.0).abs() < 0.03 && (mean[1] + 1.0).abs() < 0.015);
        assert!((c - cov).norm() < 0.06);
    }

    #[test]
    fn density_integrates_to_one() {
        // Self-normalized check: E_g[p/g] = 1 with g a wide normal.
        let m = GaussianMixture::new(vec![
            (0.3, DVector::from_element(1, -2.0), DMatrix::from_element(1, 1, 0.5)),
            (0.7, DVector::from_element(1, 1.0), DMatrix::from_element(1, 1, 2.0)),
        ])
        .unwrap();
        let g = GaussianMixture::single(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 16.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let est: f64 = (0..n)
            .map(|_| {
                let x = g.sample(&mut rng);
                (m.log_density(&x) - g.log_density(&x)).exp()
            })
            .sum::<f64>()
            / n as f64;
        assert!((est - 1.0).abs() < 0.02, "{est}");
    }

    #[test]
    fn record_round_trip() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let m = GaussianMixture::single(DVector::from_vec(vec![1.0, -1.0]), cov).unwrap();
        assert_eq!(GaussianMixture::from_record(&m.to_record()).unwrap(), m);
    }

    #[test]
    fn rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            GaussianMixture::single(DVector::zeros(2), cov),
            Err(MixtureError::NotPositiveDefinite(0))
        );
    }
}
