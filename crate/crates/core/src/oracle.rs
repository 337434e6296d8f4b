//! Exact references for checking the Monte Carlo machinery: the Kalman
//! filter likelihood of a scalar linear-Gaussian model and trapezoid
//! quadrature of a low-dimensional posterior kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_sum_exp, LN_2PI};

/// `x_t = a x_{t-1} + q eta_t`, `y_t = x_t + r eps_t`, `x_0 ~ N(m0, p0)`.
/// `q` and `r` are standard deviations, `p0` is a variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianSsm {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub m0: f64,
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("quadrature did not converge: last change {achieved:e} > tolerance {tol:e} at {points} points per axis")]
    NotConverged { achieved: f64, tol: f64, points: usize },
    #[error("quadrature supports 1 or 2 dimensions, got {0}")]
    Dimension(usize),
    #[error("invalid integration box: {0}")]
    Box(String),
    #[error("integrand is zero everywhere on the grid")]
    ZeroMass,
}

/// Exact log-likelihood by the prediction-error decomposition.
pub fn kalman_loglik(m: &LinearGaussianSsm, y: &[f64]) -> f64 {
    kalman_filter(m, y).loglik
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    pub loglik: f64,
    /// `log p(y_t | y_{1:t-1})`.
    pub per_step: Vec<f64>,
    /// Filtered means and variances of `x_t`.
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

pub fn kalman_filter(m: &LinearGaussianSsm, y: &[f64]) -> KalmanOutput {
    let (q2, r2) = (m.q * m.q, m.r * m.r);
    let (mut mean, mut var) = (m.m0, m.p0);
    let mut out = KalmanOutput {
        loglik: 0.0,
        per_step: Vec::with_capacity(y.len()),
        means: Vec::with_capacity(y.len()),
        vars: Vec::with_capacity(y.len()),
    };
    for &yt in y {
        mean *= m.a;
        var = m.a * m.a * var + q2;
        let s = var + r2;
        let e = yt - mean;
        let step = -0.5 * (LN_2PI + s.ln() + e * e / s);
        out.loglik += step;
        out.per_step.push(step);
        let gain = var / s;
        mean += gain * e;
        var *= 1.0 - gain;
        out.means.push(mean);
        out.vars.push(var);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Lower and upper corners of the integration box.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Intervals per axis on the first pass.
    pub initial_intervals: usize,
    /// Maximum intervals per axis.
    pub max_intervals: usize,
    /// Convergence tolerance on the log integral between successive halvings.
    pub tol: f64,
}

impl QuadratureSettings {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let max_intervals = if lo.len() == 1 { 1 << 16 } else { 1 << 10 };
        Self { lo, hi, initial_intervals: 16, max_intervals, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub log_integral: f64,
    /// Absolute change from the previous halving.
    pub achieved: f64,
    pub intervals: usize,
}

/// `log` of the trapezoid rule applied to `exp(log_values)` on a uniform grid
/// with spacing `h`.
pub fn log_trapezoid(log_values: &[f64], h: f64) -> f64 {
    let n = log_values.len();
    if n == 1 {
        return log_values[0] + h.ln();
    }
    let terms: Vec<f64> = log_values
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i == n - 1 { v - std::f64::consts::LN_2 } else { *v })
        .collect();
    log_sum_exp(&terms) + h.ln()
}

/// `log int exp(log_kernel(theta)) dtheta` over a 1- or 2-d box, halving the
/// grid spacing until successive estimates agree within `tol`.
pub fn quadrature_evidence<F>(log_kernel: F, settings: &QuadratureSettings) -> Result<QuadratureResult, OracleError>
where
    F: Fn(&[f64]) -> f64,
{
    let d = settings.lo.len();
    if d == 0 || d > 2 {
        return Err(OracleError::Dimension(d));
    }
    if settings.hi.len() != d || settings.lo.iter().zip(&settings.hi).any(|(l, h)| !(h > l)) {
        return Err(OracleError::Box(format!("lo {:?}, hi {:?}", settings.lo, settings.hi)));
    }
    let mut n = settings.initial_intervals.max(2);
    let mut prev_grid: Vec<f64> = Vec::new();
    let mut prev_n = 0;
    let mut prev_value: Option<f64> = None;
    let mut achieved = f64::INFINITY;
    while n <= settings.max_intervals {
        let grid = evaluate_grid(&log_kernel, settings, n, &prev_grid, prev_n);
        let value = integrate_grid(&grid, settings, n);
        if let Some(pv) = prev_value {
            if value == f64::NEG_INFINITY && pv == f64::NEG_INFINITY {
                return Err(OracleError::ZeroMass);
            }
            achieved = (value - pv).abs();
            if achieved < settings.tol {
                return Ok(QuadratureResult { log_integral: value, achieved, intervals: n });
            }
        }
        prev_value = Some(value);
        prev_grid = grid;
        prev_n = n;
        n *= 2;
    }
    Err(OracleError::NotConverged { achieved, tol: settings.tol, points: prev_n + 1 })
}

fn axis_point(s: &QuadratureSettings, axis: usize, i: usize, n: usize) -> f64 {
    s.lo[axis] + (s.hi[axis] - s.lo[axis]) * i as f64 / n as f64
}

/// Kernel values on an `(n + 1)^d` grid, reusing points shared with the
/// previous `n / 2` grid.
fn evaluate_grid<F: Fn(&[f64]) -> f64>(
    f: &F,
    s: &QuadratureSettings,
    n: usize,
    prev: &[f64],
    prev_n: usize,
) -> Vec<f64> {
    let reuse = prev_n * 2 == n && !prev.is_empty();
    if s.lo.len() == 1 {
        (0..=n)
            .map(|i| {
                if reuse && i % 2 == 0 {
                    prev[i / 2]
                } else {
                    f(&[axis_point(s, 0, i, n)])
                }
            })
            .collect()
    } else {
        let mut out = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            let x = axis_point(s, 0, i, n);
            for j in 0..=n {
                if reuse && i % 2 == 0 && j % 2 == 0 {
                    out.push(prev[(i / 2) * (prev_n + 1) + j / 2]);
                } else {
                    out.push(f(&[x, axis_point(s, 1, j, n)]));
                }
            }
        }
        out
    }
}

fn integrate_grid(grid: &[f64], s: &QuadratureSettings, n: usize) -> f64 {
    let h0 = (s.hi[0] - s.lo[0]) / n as f64;
    if s.lo.len() == 1 {
        return log_trapezoid(grid, h0);
    }
    let h1 = (s.hi[1] - s.lo[1]) / n as f64;
    let rows: Vec<f64> = grid.chunks(n + 1).map(|row| log_trapezoid(row, h1)).collect();
    log_trapezoid(&rows, h0)
}
