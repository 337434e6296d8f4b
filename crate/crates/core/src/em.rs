//! Expectation-maximization fitting of Gaussian mixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::math::log_sum_exp;
use crate::mixture::{sample_moments, GaussianMixture};

pub const MAX_EM_ITERATIONS: usize = 100;
const RIDGE_FACTOR: f64 = 1e-6;
const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmError {
    #[error("need at least {needed} points to fit in dimension {dim}, got {got}")]
    TooFewPoints { needed: usize, dim: usize, got: usize },
    #[error("data have zero spread")]
    Degenerate,
    #[error("every component became singular")]
    AllSingular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Components removed after becoming singular.
    pub dropped: usize,
}

/// Fits a mixture of at most `k` components. Components that collapse are
/// dropped and the fit continues with the rest.
///
/// Initialization is k-means++ seeding followed by a hard assignment. Every
/// covariance gets a ridge of `1e-6 * trace(S) / d`, `S` the data covariance.
pub fn fit_mixture<R: Rng + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Result<EmFit, EmError> {
    let d = data.first().map_or(0, |r| r.len());
    let n = data.len();
    if n < d + 2 {
        return Err(EmError::TooFewPoints { needed: d + 2, dim: d, got: n });
    }
    let (gmean, gcov) = sample_moments(data);
    let ridge = RIDGE_FACTOR * gcov.trace() / d as f64;
    if !(ridge > 0.0) {
        return Err(EmError::Degenerate);
    }
    let ridge_m = DMatrix::identity(d, d) * ridge;
    let points: Vec<DVector<f64>> = data.iter().map(|r| DVector::from_column_slice(r)).collect();
    let k = k.clamp(1, n / (d + 1));

    if k == 1 {
        let mixture = GaussianMixture::single(gmean, gcov + ridge_m).map_err(|_| EmError::Degenerate)?;
        let ll = points.iter().map(|p| mixture.log_density(p.as_slice())).sum();
        return Ok(EmFit { mixture, iterations: 0, log_likelihood: ll, dropped: 0 });
    }

    // Hard assignment to k-means++ centers.
    let centers = kmeans_pp(&points, k, rng);
    let mut resp = vec![vec![0.0; centers.len()]; n];
    for (i, p) in points.iter().enumerate() {
        let best = centers
            .iter()
            .enumerate()
            .map(|(j, c)| (j, (p - c).norm_squared()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
            .0;
        resp[i][best] = 1.0;
    }

    let mut dropped = 0;
    let mut prev_ll = f64::NEG_INFINITY;
    let mut mixture = None;
    let mut iterations = 0;
    let mut ll = f64::NEG_INFINITY;
    while iterations < MAX_EM_ITERATIONS {
        iterations += 1;
        // M-step.
        let kk = resp[0].len();
        let mut parts = Vec::with_capacity(kk);
        let mut keep = Vec::with_capacity(kk);
        for j in 0..kk {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk < (d + 1) as f64 {
                continue;
            }
            let mut mean = DVector::zeros(d);
            for (p, r) in points.iter().zip(&resp) {
                mean.axpy(r[j], p, 1.0);
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for (p, r) in points.iter().zip(&resp) {
                if r[j] > 0.0 {
                    let diff = p - &mean;
                    cov.ger(r[j], &diff, &diff, 1.0);
                }
            }
            cov /= nk;
            cov += &ridge_m;
            if cov.clone().cholesky().is_none() {
                continue;
            }
            parts.push((nk / n as f64, mean, cov));
            keep.push(j);
        }
        if parts.is_empty() {
            return Err(EmError::AllSingular);
        }
        if keep.len() < kk {
            dropped += kk - keep.len();
            for r in resp.iter_mut() {
                *r = keep.iter().map(|&j| r[j]).collect();
            }
        }
        let m = GaussianMixture::new(parts).map_err(|_| EmError::AllSingular)?;

        // E-step.
        ll = 0.0;
        let mut terms = vec![0.0; m.len()];
        for (p, r) in points.iter().zip(resp.iter_mut()) {
            for (t, c) in terms.iter_mut().zip(m.components()) {
                *t = c.log_weighted_density(p);
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            r.clear();
            r.extend(terms.iter().map(|t| (t - lse).exp()));
        }
        mixture = Some(m);
        if (ll - prev_ll).abs() <= REL_TOL * ll.abs() {
            break;
        }
        prev_ll = ll;
    }
    Ok(EmFit { mixture: mixture.expect("at least one EM pass"), iterations, log_likelihood: ll, dropped })
}

/// k-means++ seeding: first center uniform, then each next center with
/// probability proportional to the squared distance to the nearest center.
fn kmeans_pp<R: Rng + ?Sized>(points: &[DVector<f64>], k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = points.len() - 1;
        for (i, dd) in dist.iter().enumerate() {
            acc += dd;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = points[pick].clone();
        for (dd, p) in dist.iter_mut().zip(points) {
            *dd = dd.min((p - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}
