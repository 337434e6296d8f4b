//! Quick self-checks against exact results, run by `pmmh verify`.
//!
//! Each check is a scaled-down version of a statistical test in the test
//! suite and finishes in seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::inefficiency;
use crate::evidence::{estimate_evidence, EvidenceSettings};
use crate::filter::{FilterKind, FilterSettings};
use crate::imh::ImhSettings;
use crate::likelihood::{run_filter, KalmanLikelihood};
use crate::math::{mean, sample_variance};
use crate::model::{max_bound_excess, simulate};
use crate::models::{LinearGaussianModel, NegBinModel, PoissonRwModel, SvModel};
use crate::oracle::{kalman_loglik, quadrature_evidence, QuadratureSettings};
use crate::parallel::WorkerPool;
use crate::params::ParameterVector;
use crate::pmmh::{run_chain, ChainConfig, SamplerKind, Target};
use crate::prior::{Prior, PriorSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Linear-Gaussian test series: `a = 0.9, q = 0.3, r = 0.5`, `T` steps.
pub fn oracle_series(horizon: usize, seed: u64) -> (LinearGaussianModel, ParameterVector, Vec<f64>) {
    let model = LinearGaussianModel::new(0.0, 1.0).with_defaults(0.9, 0.3, 0.5);
    let theta = crate::model::StateSpaceModel::template(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, y) = simulate(&model, &theta, horizon, &mut rng).expect("valid parameters");
    (model, theta, y)
}

/// Mean of `exp(estimate - exact)` with its standard error over `seeds` runs.
pub fn likelihood_ratio_mean(
    kind: FilterKind,
    epsilon: f64,
    particles: usize,
    seeds: u64,
    horizon: usize,
) -> (f64, f64) {
    let (model, theta, y) = oracle_series(horizon, 1);
    let exact = kalman_loglik(&model.ssm(&theta).expect("valid"), &y);
    let ratios: Vec<f64> = (0..seeds)
        .map(|s| {
            let mut st = FilterSettings::new(particles, 1000 + s);
            st.apf_epsilon = epsilon;
            (run_filter(&model, kind, &theta, &y, &st, false).expect("filter runs").estimate.total - exact).exp()
        })
        .collect();
    (mean(&ratios), (sample_variance(&ratios) / ratios.len() as f64).sqrt())
}

fn unbiasedness(kind: FilterKind, epsilon: f64, name: &'static str) -> Check {
    let (m, se) = likelihood_ratio_mean(kind, epsilon, 200, 200, 50);
    Check { name, passed: (m - 1.0).abs() < 3.0 * se, detail: format!("mean ratio {m:.4}, SE {se:.4}") }
}

/// One-parameter oracle: `a ~ U(-1, 1)` free, `q`, `r` fixed.
pub fn one_parameter_oracle(horizon: usize, seed: u64) -> (KalmanLikelihood, PriorSpec) {
    let (model, theta, y) = oracle_series(horizon, seed);
    let template = theta.clone().fix("q").fix("r");
    let lik = KalmanLikelihood::new(model, y).with_template(template);
    let prior = PriorSpec::new().with("a", Prior::Uniform { lo: -1.0, hi: 1.0 });
    (lik, prior)
}

fn evidence_check() -> Check {
    let (lik, prior) = one_parameter_oracle(50, 2);
    let target = Target::new(&lik, &prior).expect("prior matches");
    let exact = quadrature_evidence(
        |a: &[f64]| {
            let lp = target.log_prior(a);
            if lp.is_finite() {
                lp + target.evaluate(a, 0).log_lik
            } else {
                f64::NEG_INFINITY
            }
        },
        &QuadratureSettings::new(vec![-1.0], vec![1.0]),
    );
    let exact = match exact {
        Ok(r) => r.log_integral,
        Err(e) => return Check { name: "evidence vs quadrature", passed: false, detail: e.to_string() },
    };
    let mut cfg = ChainConfig::new(SamplerKind::Imh, 3000, 5);
    cfg.imh = ImhSettings { warmup: 500, refit_at: vec![100, 200, 500, 1000, 2000], ..ImhSettings::default() };
    let pool = WorkerPool::single();
    let est = run_chain(&cfg, &target, None, &pool).map_err(|e| e.to_string()).and_then(|rec| {
        let q = rec.proposal_mixture().ok_or("no proposal")?;
        let lt: Vec<f64> = rec.log_lik.iter().zip(&rec.log_prior).map(|(a, b)| a + b).collect();
        let s = EvidenceSettings { q_draws: Some(5000), ..Default::default() };
        estimate_evidence(&target, &rec.draws, &lt, &q, &s, 6, &pool).map_err(|e| e.to_string())
    });
    match est {
        Ok(e) => Check {
            name: "evidence vs quadrature",
            passed: (e.log_p_bs - exact).abs() < 0.05 && (e.log_p_is - exact).abs() < 0.05,
            detail: format!("quadrature {exact:.4}, bridge {:.4}, importance {:.4}", e.log_p_bs, e.log_p_is),
        },
        Err(e) => Check { name: "evidence vs quadrature", passed: false, detail: e },
    }
}

fn inefficiency_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = vec![0.0; 100_000];
    for t in 1..x.len() {
        x[t] = 0.9 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    let f = inefficiency(&x).value;
    Check { name: "AR(1) inefficiency factor", passed: (13.3..=24.7).contains(&f), detail: format!("IF {f:.2}, expected 19") }
}

fn bound_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 100_000;
    let mut out = Vec::new();
    let sv = SvModel::new(true, 0.03);
    let y: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.02).collect();
    let r = max_bound_excess(
        &sv,
        &y,
        n,
        |r| {
            crate::model::StateSpaceModel::template(&sv)
                .with_value("mu", r.random_range(-5.0..5.0))
                .with_value("phi", r.random_range(0.0..1.0))
                .with_value("sigma2_eta", r.random_range(0.001..1.0))
                .with_value("rho", r.random_range(-0.99..0.99))
        },
        |r| crate::models::sv::SvState { x: r.random_range(-20.0..20.0), eta: r.sample(StandardNormal) },
        &mut rng,
    );
    out.push(excess_check("sv observation bound", r));
    let counts: Vec<f64> = (0..200).map(|_| rng.random_range(0..40) as f64).collect();
    let nb = NegBinModel;
    let r = max_bound_excess(
        &nb,
        &counts,
        n,
        |r| {
            crate::model::StateSpaceModel::template(&nb)
                .with_value("nu", r.random_range(0.01..50.0))
                .with_value("alpha", r.random_range(0.01..50.0))
                .with_value("beta", r.random_range(0.01..50.0))
        },
        |r| r.random_range(0.0..200.0),
        &mut rng,
    );
    out.push(excess_check("negbin observation bound", r));
    let pr = PoissonRwModel;
    let r = max_bound_excess(
        &pr,
        &counts,
        n,
        |r| {
            crate::model::StateSpaceModel::template(&pr)
                .with_value("sigma2", r.random_range(0.001..2.0))
                .with_value("mu0", r.random_range(-5.0..5.0))
        },
        |r| r.random_range(-10.0..10.0),
        &mut rng,
    );
    out.push(excess_check("poisson observation bound", r));
    out
}

fn excess_check(name: &'static str, r: Result<f64, crate::model::ModelError>) -> Check {
    match r {
        Ok(e) => Check { name, passed: e <= 1e-12, detail: format!("largest log excess {e:.3e}") },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

/// Runs every check.
pub fn run_checks() -> Vec<Check> {
    let mut out = vec![
        unbiasedness(FilterKind::Sir, 0.0, "SIR likelihood unbiased"),
        unbiasedness(FilterKind::Apf, 0.0, "APF likelihood unbiased"),
        unbiasedness(FilterKind::Apf, 0.05, "defensive APF likelihood unbiased"),
        evidence_check(),
        inefficiency_check(),
    ];
    out.extend(bound_checks());
    out
}
