//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//! replicates = 4
//! data = "data/sv.csv"
//! output = "runs/sv"
//!
//! [model]
//! preset = "sv_leverage"
//!
//! [parameters]
//! rho = { value = -0.3 }
//!
//! [sampler]
//! kind = "imh"
//! iterations = 10000
//!
//! [filter]
//! kind = "sir"
//! particles = 500
//! ```
//!
//! Any key can be overridden with `path.to.key=value`, where the value is a
//! TOML literal (strings may be left unquoted).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::EvidenceSettings;
use crate::filter::{FilterSettings, Resampling, DEFAULT_APF_EPSILON};
use crate::imh::ImhSettings;
use crate::models::ModelSpec;
use crate::parallel::BlockSettings;
use crate::pmmh::{ChainConfig, SamplerKind};
use crate::prior::Prior;
use crate::rwm::RwmSettings;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    #[default]
    Sir,
    Apf,
    /// Exact Kalman likelihood; linear-Gaussian model only.
    Kalman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub kind: LikelihoodKind,
    /// Particles per worker.
    pub particles: usize,
    pub resampling: Resampling,
    pub apf_epsilon: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { kind: LikelihoodKind::Sir, particles: 500, resampling: Resampling::Stratified, apf_epsilon: DEFAULT_APF_EPSILON }
    }
}

impl FilterConfig {
    pub fn settings(&self) -> FilterSettings {
        let mut s = FilterSettings::new(self.particles, 0);
        s.resampling = self.resampling;
        s.apf_epsilon = self.apf_epsilon;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One filter per likelihood evaluation.
    #[default]
    None,
    /// Average `workers` independent filters per evaluation.
    Average,
    /// Evaluate IMH candidates in blocks across `workers`.
    Blocks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParallelConfig {
    pub scheme: Scheme,
    pub workers: usize,
    /// OS threads; 0 uses every available core.
    pub threads: usize,
    /// Candidates per worker in each block (block scheme).
    pub block_sizes: Vec<usize>,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self { scheme: Scheme::None, workers: 8, threads: 0, block_sizes: BlockSettings::default().sizes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Draw from the prior.
    #[default]
    Prior,
    /// Start at the parameter values of the template (after overrides).
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub iterations: usize,
    pub init: InitKind,
    pub rwm: RwmSettings,
    pub imh: ImhSettings,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Imh,
            iterations: 10_000,
            init: InitKind::Prior,
            rwm: RwmSettings::default(),
            imh: ImhSettings::default(),
        }
    }
}

/// Override of one parameter's value or fixed flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverride {
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub fixed: Option<bool>,
}

/// Synthetic data generation for `simulate` and for runs without a data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// True parameter values; unlisted ones keep the model defaults.
    #[serde(default)]
    pub truth: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub plots: bool,
    /// Fraction of each chain dropped before diagnostics.
    pub burn_in: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { plots: true, burn_in: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    /// CSV with a `y` column; relative to the config file.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub model: ModelSpec,
    #[serde(default)]
    pub parameters: BTreeMap<String, ParamOverride>,
    /// Prior overrides by parameter name.
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub parallel: ParallelConfig,
    /// Evidence estimation; requires the IMH sampler.
    #[serde(default)]
    pub evidence: Option<EvidenceSettings>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub report: OutputConfig,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

impl RunConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            seed: 0,
            replicates: 1,
            data: None,
            output: default_output(),
            model,
            parameters: BTreeMap::new(),
            priors: BTreeMap::new(),
            sampler: SamplerConfig::default(),
            filter: FilterConfig::default(),
            parallel: ParallelConfig::default(),
            evidence: None,
            simulate: None,
            report: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        Self::parse_with(text, overrides, Path::new("<config>"))
    }

    /// Reads a config file; relative `data` and `output` paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = Self::parse_with(&text, overrides, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &cfg.data {
            if d.is_relative() {
                cfg.data = Some(base.join(d));
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    fn parse_with(text: &str, overrides: &[String], path: &Path) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse { path: path.into(), message };
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig =
            toml::Value::Table(value).try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks cross-field consistency before any compute.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.data.is_none() && self.simulate.is_none() {
            return bad("either `data` or a [simulate] section is required".into());
        }
        self.sampler.imh.validate().map_err(ConfigError::Invalid)?;
        if self.filter.kind != LikelihoodKind::Kalman && self.filter.particles < 2 {
            return bad("filter.particles must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.filter.apf_epsilon) {
            return bad(format!("filter.apf_epsilon = {} is outside [0, 1]", self.filter.apf_epsilon));
        }
        if self.filter.kind == LikelihoodKind::Kalman && self.model.preset != crate::models::Preset::LinearGaussian {
            return bad("the Kalman likelihood exists only for linear_gaussian".into());
        }
        if self.parallel.workers == 0 {
            return bad("parallel.workers must be at least 1".into());
        }
        if self.parallel.scheme == Scheme::Blocks {
            if self.sampler.kind != SamplerKind::Imh {
                return bad("the block scheme needs sampler.kind = \"imh\"".into());
            }
            self.blocks().expect("block scheme").validate().map_err(ConfigError::Invalid)?;
        }
        if self.evidence.is_some() && self.sampler.kind != SamplerKind::Imh {
            return bad("evidence estimation needs sampler.kind = \"imh\"".into());
        }
        if !(0.0..1.0).contains(&self.report.burn_in) {
            return bad(format!("report.burn_in = {} is outside [0, 1)", self.report.burn_in));
        }
        Ok(())
    }

    pub fn blocks(&self) -> Option<BlockSettings> {
        (self.parallel.scheme == Scheme::Blocks)
            .then(|| BlockSettings { workers: self.parallel.workers, sizes: self.parallel.block_sizes.clone() })
    }

    /// Likelihood workers per evaluation.
    pub fn likelihood_workers(&self) -> usize {
        if self.parallel.scheme == Scheme::Average {
            self.parallel.workers
        } else {
            1
        }
    }

    pub fn chain_config(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            sampler: self.sampler.kind,
            iterations: self.sampler.iterations,
            seed,
            rwm: self.sampler.rwm.clone(),
            imh: self.sampler.imh.clone(),
            blocks: self.blocks(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies `a.b.c=value` to a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.into()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
