//! Chain diagnostics: acceptance rate, inefficiency factors, equivalent
//! computing time and posterior summaries.

use serde::{Deserialize, Serialize};

use crate::math::{mean, quantile_sorted};

/// Minimum trace length for an inefficiency factor.
pub const MIN_TRACE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IfFlag {
    Ok,
    /// The truncated sum went negative and was clamped to zero.
    Clamped,
    /// Constant trace; the factor is undefined.
    Constant,
    /// Fewer than `MIN_TRACE` values.
    TooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inefficiency {
    pub value: f64,
    /// Lag at which the sum was truncated.
    pub lag: usize,
    pub flag: IfFlag,
}

/// `1 + 2 sum_{j=1}^{L} rho_j` with the biased autocovariance and `L` the
/// first lag with `|rho_L| < 2/sqrt(K)`; `rho_L` itself is included.
pub fn inefficiency(trace: &[f64]) -> Inefficiency {
    let k = trace.len();
    if k < MIN_TRACE {
        return Inefficiency { value: f64::NAN, lag: 0, flag: IfFlag::TooShort };
    }
    let m = mean(trace);
    let centered: Vec<f64> = trace.iter().map(|v| v - m).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / k as f64;
    if !(c0 > 0.0) {
        return Inefficiency { value: f64::NAN, lag: 0, flag: IfFlag::Constant };
    }
    let threshold = 2.0 / (k as f64).sqrt();
    let mut sum = 0.0;
    let mut lag = k - 1;
    for j in 1..k {
        let cj = centered[..k - j].iter().zip(&centered[j..]).map(|(a, b)| a * b).sum::<f64>() / k as f64;
        let rho = cj / c0;
        sum += rho;
        if rho.abs() < threshold {
            lag = j;
            break;
        }
    }
    let value = 1.0 + 2.0 * sum;
    if value < 0.0 {
        log::warn!("negative inefficiency factor {value:.3} clamped to 0");
        return Inefficiency { value: 0.0, lag, flag: IfFlag::Clamped };
    }
    Inefficiency { value, lag, flag: IfFlag::Ok }
}

/// Equivalent computing time `10 * IF * t`, `t` seconds per iteration.
pub fn ect(inefficiency: f64, seconds_per_iteration: f64) -> f64 {
    10.0 * inefficiency * seconds_per_iteration
}

/// Percentage of accepted proposals.
pub fn acceptance_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return f64::NAN;
    }
    100.0 * flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub inefficiency: Inefficiency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub parameters: Vec<ParameterSummary>,
    pub if_min: f64,
    pub if_median: f64,
    pub if_max: f64,
    pub seconds_per_iteration: f64,
    /// ECT at the largest inefficiency factor.
    pub ect: f64,
    pub burn_in: usize,
}

/// Summaries of the draws after dropping the first `burn_in_fraction` of them.
pub fn summarize(
    names: &[String],
    draws: &[Vec<f64>],
    accepted: &[bool],
    seconds: &[f64],
    burn_in_fraction: f64,
) -> ChainDiagnostics {
    let burn_in = ((draws.len() as f64) * burn_in_fraction.clamp(0.0, 0.99)) as usize;
    let kept = &draws[burn_in..];
    let parameters: Vec<ParameterSummary> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let col: Vec<f64> = kept.iter().map(|r| r[k]).collect();
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let m = if col.is_empty() { f64::NAN } else { mean(&col) };
            let sd = if col.len() > 1 { crate::math::sample_variance(&col).sqrt() } else { f64::NAN };
            let q = |p| if sorted.is_empty() { f64::NAN } else { quantile_sorted(&sorted, p) };
            ParameterSummary {
                name: name.clone(),
                mean: m,
                sd,
                q025: q(0.025),
                q50: q(0.5),
                q975: q(0.975),
                inefficiency: inefficiency(&col),
            }
        })
        .collect();
    let mut ifs: Vec<f64> = parameters.iter().map(|p| p.inefficiency.value).filter(|v| v.is_finite()).collect();
    ifs.sort_by(f64::total_cmp);
    let pick = |p: f64| if ifs.is_empty() { f64::NAN } else { quantile_sorted(&ifs, p) };
    let spi = if seconds.is_empty() { 0.0 } else { mean(seconds) };
    ChainDiagnostics {
        acceptance_rate: acceptance_rate(&accepted[burn_in.min(accepted.len())..]),
        if_min: pick(0.0),
        if_median: pick(0.5),
        if_max: pick(1.0),
        seconds_per_iteration: spi,
        ect: ect(pick(1.0), spi),
        parameters,
        burn_in,
    }
}

/// Two-sample Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS distance between the empirical CDFs of `a` and `b` with the asymptotic
/// p-value. `sizes` replaces the sample sizes, e.g. by effective sizes
/// `K / IF` when the samples are autocorrelated chains.
pub fn ks_two_sample(a: &[f64], b: &[f64], sizes: Option<(f64, f64)>) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let (ea, eb) = sizes.unwrap_or((na, nb));
    let ne = (ea * eb / (ea + eb)).sqrt();
    KsTest { statistic: d, p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d) }
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_trace_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let f = inefficiency(&x);
        assert!((0.8..=1.3).contains(&f.value), "{f:?}");
    }

    #[test]
    fn ar1_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = vec![0.0; 100_000];
        for t in 1..x.len() {
            x[t] = 0.9 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let f = inefficiency(&x);
        assert!((f.value - 19.0).abs() < 0.3 * 19.0, "{f:?}");
    }

    #[test]
    fn alternating_trace_clamped() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = inefficiency(&x);
        assert_eq!(f.flag, IfFlag::Clamped);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn constant_trace_flagged() {
        let f = inefficiency(&[2.0; 100]);
        assert_eq!(f.flag, IfFlag::Constant);
        assert!(f.value.is_nan());
    }

    #[test]
    fn ect_values() {
        assert_eq!(ect(5.0, 0.2), 10.0);
        assert_eq!(ect(1.0, 0.0), 0.0);
        // Table row: IF 22.54 with ECT 19.35 implies t = 0.08585 s.
        let t = 19.35 / (10.0 * 22.54);
        assert!((ect(22.54, t) - 19.35).abs() < 1e-12);
    }

    #[test]
    fn acceptance_values() {
        assert_eq!(acceptance_rate(&[true; 10]), 100.0);
        let alt: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert_eq!(acceptance_rate(&alt), 50.0);
    }

    #[test]
    fn two_state_chain_acceptance() {
        // Target (0.25, 0.75), proposal: always the other state.
        // Stationary acceptance = 0.25 * 1 + 0.75 * (1/3) = 0.5.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = [0.25f64, 0.75];
        let mut s = 0;
        let n = 40_000;
        let flags: Vec<bool> = (0..n)
            .map(|_| {
                let c = 1 - s;
                let acc = rng.random::<f64>() < (p[c] / p[s]).min(1.0);
                if acc {
                    s = c;
                }
                acc
            })
            .collect();
        let rate = acceptance_rate(&flags) / 100.0;
        // Successive flags alternate in dependence; IF-adjusted 3 SE bound.
        let se = (0.25f64 / n as f64).sqrt() * inefficiency(&flags.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>()).value.max(1.0).sqrt();
        assert!((rate - 0.5).abs() < 3.0 * se, "{rate}");
    }

    #[test]
    fn summary_drops_burn_in() {
        let draws: Vec<Vec<f64>> = (0..100).map(|i| vec![if i < 10 { 100.0 } else { (i % 7) as f64 }]).collect();
        let s = summarize(&["a".into()], &draws, &[true; 100], &[0.01; 100], 0.1);
        assert_eq!(s.burn_in, 10);
        assert!(s.parameters[0].q975 <= 6.0);
    }

    #[test]
    fn ks_same_and_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.sample(StandardNormal)).collect();
        let c: Vec<f64> = b.iter().map(|v| v + 0.3).collect();
        assert!(ks_two_sample(&a, &b, None).p_value > 0.01);
        assert!(ks_two_sample(&a, &c, None).p_value < 1e-6);
        assert_eq!(ks_two_sample(&a, &a, None).statistic, 0.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert!((kolmogorov_q(1.36) - 0.049).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
    }
}
