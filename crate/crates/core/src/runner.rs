//! Run orchestration: builds the model, likelihood and prior from a
//! configuration, runs replicate chains and collects their results.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, InitKind, LikelihoodKind, RunConfig};
use crate::dataset::{Dataset, DatasetError};
use crate::diagnostics::{summarize, ChainDiagnostics};
use crate::evidence::{estimate_evidence, EvidenceError, EvidenceEstimate};
use crate::filter::{FilterError, FilterKind, FilteredMoments};
use crate::likelihood::{run_filter, KalmanLikelihood, Likelihood, ParticleLikelihood};
use crate::math::derive_seed;
use crate::model::{simulate, ModelError, StateSpaceModel};
use crate::models::{AnyModel, ModelSpec};
use crate::oracle::kalman_filter;
use crate::parallel::WorkerPool;
use crate::params::{ParamError, ParameterVector};
use crate::pmmh::{run_chain, ChainError, RunRecord, Target};
use crate::prior::{PriorError, PriorSpec};
use crate::report::{aggregate, table_markdown, write_replicate, AggregateRow};
use crate::with_model;

const REPLICATE_STREAM: u64 = 11;
const SIMULATION_STREAM: u64 = 12;
/// The bridge constant's likelihood uses this many times the run's particles.
const CONSTANT_PARTICLE_FACTOR: usize = 10;
const STATES_STREAM: u64 = 13;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("{0}")]
    Io(String),
}

/// Applies value and fixed-flag overrides to a template.
pub fn apply_parameter_overrides(
    template: &mut ParameterVector,
    overrides: &BTreeMap<String, crate::config::ParamOverride>,
) -> Result<(), ParamError> {
    for (name, o) in overrides {
        if let Some(v) = o.value {
            template.set(name, v)?;
        }
        if let Some(f) = o.fixed {
            template.set_fixed(name, f)?;
        }
        if o.value.is_none() && o.fixed.is_none() {
            template.value(name)?;
        }
    }
    Ok(())
}

/// Series simulated from a model at known parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: Dataset,
    /// Per-step summary of the latent state (e.g. log-volatility).
    pub states: Vec<f64>,
    pub truth: ParameterVector,
}

/// Simulates `horizon` observations. `truth` entries override the model's
/// default values; `covariates` feed the structural model.
pub fn simulate_series(
    spec: &ModelSpec,
    truth: &BTreeMap<String, f64>,
    horizon: usize,
    seed: u64,
    covariates: &[(String, Vec<f64>)],
) -> Result<Simulation, RunError> {
    let model = AnyModel::build(spec, covariates, horizon)?;
    let mut theta = model.template();
    for (k, v) in truth {
        theta.set(k, *v)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, states) = with_model!(&model, m => {
        let (xs, y) = simulate(m, &theta, horizon, &mut rng)?;
        (y, xs.iter().map(|x| m.state_summary(x)).collect::<Vec<f64>>())
    });
    let mut cov: Vec<(String, Vec<f64>)> =
        spec.covariates.iter().filter_map(|n| covariates.iter().find(|(c, _)| c == n).cloned()).collect();
    cov.retain(|(n, _)| n != "state");
    let data = Dataset { y, covariates: cov };
    Ok(Simulation { data, states, truth: theta })
}

/// Everything needed to run chains on one dataset.
pub struct Problem {
    pub model: AnyModel,
    pub data: Dataset,
    pub template: ParameterVector,
    pub priors: PriorSpec,
    pub likelihood: Box<dyn Likelihood + Send>,
    /// Known parameter values when the data were simulated.
    pub truth: Option<ParameterVector>,
    pub true_states: Option<Vec<f64>>,
}

impl Problem {
    pub fn new(config: &RunConfig, data: Dataset, pool: WorkerPool) -> Result<Self, RunError> {
        let model = AnyModel::build(&config.model, &data.covariates, data.len())?;
        if model.count_data() {
            if let Some((i, v)) = data.y.iter().enumerate().find(|(_, v)| **v < 0.0 || v.fract() != 0.0) {
                return Err(DatasetError::NotCount { row: i + 2, value: *v }.into());
            }
        }
        let mut template = model.template();
        apply_parameter_overrides(&mut template, &config.parameters)?;
        let mut priors = model.default_priors();
        for (name, p) in &config.priors {
            priors = priors.with(name, p.clone());
        }
        priors.check(&template)?;
        let settings = config.filter.settings();
        let likelihood: Box<dyn Likelihood + Send> = match (config.filter.kind, &model) {
            (LikelihoodKind::Kalman, AnyModel::LinearGaussian(m)) => {
                Box::new(KalmanLikelihood::new(m.clone(), data.y.clone()).with_template(template.clone()))
            }
            (LikelihoodKind::Kalman, _) => {
                return Err(ConfigError::Invalid("the Kalman likelihood exists only for linear_gaussian".into()).into())
            }
            (kind, any) => {
                let kind = if kind == LikelihoodKind::Apf { FilterKind::Apf } else { FilterKind::Sir };
                with_model!(any, m => Box::new(
                    ParticleLikelihood::new(m.clone(), data.y.clone(), kind, settings)
                        .with_template(template.clone())
                        .with_pool(pool.clone()),
                ) as Box<dyn Likelihood + Send>)
            }
        };
        Ok(Self { model, data, template, priors, likelihood, truth: None, true_states: None })
    }

    /// Loads or simulates the data named by the config, then builds the problem.
    pub fn from_config(config: &RunConfig, pool: WorkerPool) -> Result<Self, RunError> {
        let (data, sim) = load_or_simulate(config)?;
        let mut p = Self::new(config, data, pool)?;
        if let Some(s) = sim {
            p.truth = Some(s.truth);
            p.true_states = Some(s.states);
        }
        Ok(p)
    }

    pub fn target(&self) -> Result<Target<'_>, PriorError> {
        Target::new(&*self.likelihood, &self.priors)?.with_template(self.template.clone())
    }

    /// Filtered mean and variance of the state summary at `theta`.
    pub fn filtered_states(&self, theta: &ParameterVector, config: &RunConfig, seed: u64) -> Result<FilteredMoments, RunError> {
        let y = &self.data.y;
        if config.filter.kind == LikelihoodKind::Kalman {
            if let AnyModel::LinearGaussian(m) = &self.model {
                let k = kalman_filter(&m.ssm(theta)?, y);
                return Ok(FilteredMoments { mean: k.means, var: k.vars });
            }
        }
        let kind = if config.filter.kind == LikelihoodKind::Apf { FilterKind::Apf } else { FilterKind::Sir };
        let settings = config.filter.settings().with_seed(seed);
        let out = with_model!(&self.model, m => run_filter(m, kind, theta, y, &settings, true))?;
        Ok(out.moments.unwrap_or_default())
    }
}

/// Seed of the series simulated for `config`: `simulate.seed` when given,
/// otherwise derived from the run seed.
pub fn simulation_seed(config: &RunConfig) -> u64 {
    config.simulate.as_ref().and_then(|s| s.seed).unwrap_or_else(|| derive_seed(config.seed, &[SIMULATION_STREAM]))
}

fn load_or_simulate(config: &RunConfig) -> Result<(Dataset, Option<Simulation>), RunError> {
    let counts = AnyModel::build(&config.model, &[], 1).map(|m| m.count_data()).unwrap_or(false);
    let file = match &config.data {
        Some(path) => Some(Dataset::load(path, counts)?),
        None => None,
    };
    match (&config.simulate, file) {
        (Some(sim), file) => {
            let covariates = file.map(|d| d.covariates).unwrap_or_default();
            let s = simulate_series(&config.model, &sim.truth, sim.horizon, simulation_seed(config), &covariates)?;
            Ok((s.data.clone(), Some(s)))
        }
        (None, Some(d)) => Ok((d, None)),
        (None, None) => Err(ConfigError::Invalid("either `data` or a [simulate] section is required".into()).into()),
    }
}

/// Seed of replicate `r`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &[REPLICATE_STREAM, r as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub model: String,
    pub sampler: String,
    pub filter: String,
    pub particles: usize,
    pub workers: usize,
    pub replicate: usize,
    pub seed: u64,
    pub iterations: usize,
    pub diagnostics: ChainDiagnostics,
    pub evidence: Option<EvidenceEstimate>,
    /// Values used to simulate the data, when known.
    pub truth: Option<BTreeMap<String, f64>>,
    /// Whether each true value lies inside its 95% credible interval.
    pub coverage: Option<BTreeMap<String, bool>>,
    pub proposal_components: Option<usize>,
    pub filter_failures: usize,
    pub rwm_fallbacks: usize,
    pub failed_refits: usize,
    pub total_seconds: f64,
}

pub struct ReplicateResult {
    pub record: RunRecord,
    pub summary: ReplicateSummary,
    pub states: Option<FilteredMoments>,
}

pub fn sampler_name(config: &RunConfig) -> String {
    let s = serde_json::to_value(config.sampler.kind).expect("enum serializes");
    s.as_str().unwrap_or_default().to_string()
}

pub fn filter_name(config: &RunConfig) -> String {
    let s = serde_json::to_value(config.filter.kind).expect("enum serializes");
    s.as_str().unwrap_or_default().to_string()
}

/// Runs replicate `r` of a configuration.
pub fn run_replicate(problem: &Problem, config: &RunConfig, r: usize, pool: &WorkerPool) -> Result<ReplicateResult, RunError> {
    let seed = replicate_seed(config.seed, r);
    let target = problem.target()?;
    let init = (config.sampler.init == InitKind::Template).then(|| problem.template.pack());
    let record = run_chain(&config.chain_config(seed), &target, init.as_deref(), pool)?;
    let diagnostics = summarize(&record.names, &record.draws, &record.accepted, &record.seconds, config.report.burn_in);

    let evidence = match (&config.evidence, record.proposal_mixture()) {
        (Some(settings), Some(q)) if !record.is_empty() => {
            let lt: Vec<f64> = record.log_lik.iter().zip(&record.log_prior).map(|(a, b)| a + b).collect();
            let mut s = settings.clone();
            s.burn_in = config.report.burn_in;
            if s.constant_particles.is_none() && config.filter.kind != LikelihoodKind::Kalman {
                s.constant_particles = Some(CONSTANT_PARTICLE_FACTOR * config.filter.particles);
            }
            Some(estimate_evidence(&target, &record.draws, &lt, &q, &s, seed, pool)?)
        }
        _ => None,
    };

    let truth = problem.truth.as_ref().map(|t| {
        t.entries().iter().filter(|p| !p.fixed).map(|p| (p.name.clone(), p.value)).collect::<BTreeMap<_, _>>()
    });
    let coverage = truth.as_ref().filter(|_| !record.is_empty()).map(|t| {
        diagnostics
            .parameters
            .iter()
            .filter_map(|p| t.get(&p.name).map(|v| (p.name.clone(), p.q025 <= *v && *v <= p.q975)))
            .collect()
    });

    let states = if record.is_empty() {
        None
    } else {
        let mean: Vec<f64> = diagnostics.parameters.iter().map(|p| p.mean).collect();
        let theta = target.theta(&mean);
        problem.filtered_states(&theta, config, derive_seed(seed, &[STATES_STREAM])).ok()
    };

    let summary = ReplicateSummary {
        model: problem.model.name().to_string(),
        sampler: sampler_name(config),
        filter: filter_name(config),
        particles: config.filter.particles,
        workers: config.likelihood_workers().max(config.blocks().map_or(1, |b| b.workers)),
        replicate: r,
        seed,
        iterations: record.len(),
        evidence,
        truth,
        coverage,
        proposal_components: record.proposal.as_ref().map(|p| p.weights.len()),
        filter_failures: record.filter_failures,
        rwm_fallbacks: record.rwm_fallbacks,
        failed_refits: record.failed_refits,
        total_seconds: record.seconds.iter().sum(),
        diagnostics,
    };
    Ok(ReplicateResult { record, summary, states })
}

/// Worker pool implied by a configuration.
pub fn pool_for(config: &RunConfig) -> Result<WorkerPool, RunError> {
    WorkerPool::new(config.likelihood_workers(), config.parallel.threads).map_err(RunError::Io)
}

/// Pool used for block evaluation and evidence passes.
pub fn outer_pool_for(config: &RunConfig) -> Result<WorkerPool, RunError> {
    WorkerPool::new(config.parallel.workers, config.parallel.threads).map_err(RunError::Io)
}

/// Outcome of a whole configured run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub replicates: Vec<ReplicateSummary>,
    pub aggregate: AggregateRow,
}

/// Runs every replicate of `config` and writes `rep_NNN/` directories,
/// `table.md`, `aggregate.json` and the resolved `config.toml` under
/// `config.output`.
pub fn execute(config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let pool = pool_for(config)?;
    let outer = outer_pool_for(config)?;
    let problem = Problem::from_config(config, pool)?;
    let out = &config.output;
    std::fs::create_dir_all(out).map_err(|e| RunError::Io(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("config.toml"), config.to_toml()).map_err(|e| RunError::Io(e.to_string()))?;
    let mut summaries = Vec::with_capacity(config.replicates);
    for r in 0..config.replicates {
        log::info!("replicate {}/{}", r + 1, config.replicates);
        let result = run_replicate(&problem, config, r, &outer)?;
        write_replicate(&out.join(format!("rep_{r:03}")), &result, config.report.plots)?;
        summaries.push(result.summary);
    }
    let row = aggregate(&summaries);
    std::fs::write(out.join("table.md"), table_markdown(std::slice::from_ref(&row)))
        .map_err(|e| RunError::Io(e.to_string()))?;
    let output = RunOutput { replicates: summaries, aggregate: row };
    let json = serde_json::to_string_pretty(&output.aggregate).map_err(|e| RunError::Io(e.to_string()))?;
    std::fs::write(out.join("aggregate.json"), json + "\n").map_err(|e| RunError::Io(e.to_string()))?;
    Ok(output)
}
