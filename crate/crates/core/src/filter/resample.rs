use rand::Rng;
use rand_distr::Exp1;

use super::{FilterError, Resampling};

/// Draws `masses.len()` ancestor indices.
pub fn resample<R: Rng + ?Sized>(
    masses: &[f64],
    scheme: Resampling,
    rng: &mut R,
) -> Result<Vec<usize>, FilterError> {
    let mut out = Vec::with_capacity(masses.len());
    resample_into(masses, masses.len(), scheme, rng, &mut out)?;
    Ok(out)
}

/// Draws `count` ancestor indices from normalized `masses` into `out`.
///
/// Multinomial draws are i.i.d.; stratified draws place one uniform in each
/// stratum `[(k - 1)/count, k/count)`. Both are inverted through the
/// cumulative masses in a single sorted sweep.
pub fn resample_into<R: Rng + ?Sized>(
    masses: &[f64],
    count: usize,
    scheme: Resampling,
    rng: &mut R,
    out: &mut Vec<usize>,
) -> Result<(), FilterError> {
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(FilterError::BadMass);
    }
    out.clear();
    if count == 0 || masses.is_empty() {
        return Ok(());
    }
    let n = count as f64;
    let last = masses.len() - 1;
    let mut cum = masses[0];
    let mut i = 0usize;
    let mut push = |u: f64, out: &mut Vec<usize>| {
        while u >= cum && i < last {
            i += 1;
            cum += masses[i];
        }
        out.push(i);
    };
    match scheme {
        Resampling::Stratified => {
            for k in 0..count {
                let u = (k as f64 + rng.random::<f64>()) / n;
                push(u, out);
            }
        }
        Resampling::Multinomial => {
            // Sorted i.i.d. uniforms from normalized exponential spacings.
            let mut spacings: Vec<f64> = (0..=count).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = spacings.iter().sum();
            let mut acc = 0.0;
            for e in spacings.iter_mut().take(count) {
                acc += *e;
                push(acc / total, out);
            }
        }
    }
    // Guard against ancestors with zero mass picked through rounding at the tail.
    for idx in out.iter_mut() {
        while masses[*idx] == 0.0 && *idx > 0 {
            *idx -= 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_selects_single_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for scheme in [Resampling::Multinomial, Resampling::Stratified] {
            let idx = resample(&[1.0, 0.0, 0.0, 0.0], scheme, &mut rng).unwrap();
            assert_eq!(idx, vec![0; 4]);
            let idx = resample(&[0.0, 0.0, 1.0, 0.0], scheme, &mut rng).unwrap();
            assert_eq!(idx, vec![2; 4]);
        }
    }

    #[test]
    fn stratified_two_halves_is_exact() {
        // Stratum 1 is [0, 0.5) -> index 0, stratum 2 is [0.5, 1) -> index 1.
        for seed in 0..500 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = resample(&[0.5, 0.5], Resampling::Stratified, &mut rng).unwrap();
            assert_eq!(idx, vec![0, 1]);
        }
    }

    #[test]
    fn uniform_counts_within_four_sigma() {
        let m = 100_000;
        let masses = vec![1.0 / m as f64; m];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let idx = resample(&masses, Resampling::Multinomial, &mut rng).unwrap();
        // Bucket into 100 bins of 1000 particles: each bin count ~ Binomial(m, 0.01).
        let mut bins = vec![0usize; 100];
        for i in idx {
            bins[i / 1000] += 1;
        }
        let sd = (m as f64 * 0.01 * 0.99).sqrt();
        for b in bins {
            assert!((b as f64 - 1000.0).abs() < 4.0 * sd, "bin count {b}");
        }
    }

    #[test]
    fn expected_counts_match_masses() {
        let masses = [0.1, 0.2, 0.3, 0.4];
        for scheme in [Resampling::Multinomial, Resampling::Stratified] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut counts = [0usize; 4];
            let reps = 20_000;
            for _ in 0..reps {
                for i in resample(&masses, scheme, &mut rng).unwrap() {
                    counts[i] += 1;
                }
            }
            for k in 0..4 {
                let expected = reps as f64 * 4.0 * masses[k];
                let sd = (reps as f64 * 4.0 * masses[k] * (1.0 - masses[k])).sqrt();
                assert!(
                    (counts[k] as f64 - expected).abs() < 4.0 * sd,
                    "{scheme:?} index {k}: {} vs {expected}",
                    counts[k]
                );
            }
        }
    }

    #[test]
    fn non_finite_mass_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            resample(&[0.5, f64::NAN], Resampling::Stratified, &mut rng),
            Err(FilterError::BadMass)
        );
    }
}
