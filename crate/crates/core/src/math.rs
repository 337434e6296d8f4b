//! Small numerical helpers shared across the crate: log-domain reductions,
//! Gaussian densities and deterministic seed derivation.

use statrs::function::erf::{erf, erfc};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(sum(exp(x)))` with a max shift. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(mean(exp(x)))`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log density of `N(mean, sd^2)` at `x`.
#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated without cancellation in either tail.
pub fn std_normal_interval(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        0.5 * (erf(b / s) - erf(a / s))
    }
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of stream identifiers.
///
/// Distinct paths give statistically independent seeds; the result depends
/// only on the inputs, never on scheduling.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    let mut h = mix64(parent.wrapping_add(0x9e37_79b9_7f4a_7c15));
    for &p in path {
        h = mix64(h ^ mix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Arithmetic mean.
pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Linear-interpolation quantile of an already sorted slice (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of an unsorted slice.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-700.0, -700.0]);
        assert!((v - (-700.0 + 2f64.ln())).abs() < 1e-12);
        let v = log_sum_exp(&[700.0, 700.0]);
        assert!((v - (700.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.0, f64::NEG_INFINITY)).abs() < 1e-15);
    }

    #[test]
    fn normal_interval_tails() {
        let v = std_normal_interval(-1e-6, 1e-6);
        let expected = 2e-6 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((v / expected - 1.0).abs() < 1e-9);
        let far = std_normal_interval(10.0, 11.0);
        assert!(far > 0.0 && far < 1e-22);
        assert!((std_normal_interval(-40.0, 40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0]);
        let b = derive_seed(1, &[1]);
        let c = derive_seed(2, &[0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[0]));
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
