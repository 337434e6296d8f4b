//! Model families and their named presets.

pub mod linear_gaussian;
pub mod negbin;
pub mod poisson_rw;
pub mod structural;
pub mod sv;

use serde::{Deserialize, Serialize};

pub use linear_gaussian::LinearGaussianModel;
pub use negbin::NegBinModel;
pub use poisson_rw::PoissonRwModel;
pub use structural::{PoissonStructuralModel, StructuralOptions};
pub use sv::{LeverageTiming, SvModel};

use crate::model::{ModelError, StateSpaceModel};
use crate::params::ParameterVector;
use crate::prior::{Prior, PriorSpec};

/// Outlier probability used by the outlier presets.
pub const DEFAULT_OUTLIER_PROB: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Sv,
    SvLeverage,
    SvOutlier,
    SvLeverageOutlier,
    Negbin,
    PoissonRw,
    PoissonStructural,
    LinearGaussian,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Sv,
        Preset::SvLeverage,
        Preset::SvOutlier,
        Preset::SvLeverageOutlier,
        Preset::Negbin,
        Preset::PoissonRw,
        Preset::PoissonStructural,
        Preset::LinearGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Sv => "sv",
            Preset::SvLeverage => "sv_leverage",
            Preset::SvOutlier => "sv_outlier",
            Preset::SvLeverageOutlier => "sv_leverage_outlier",
            Preset::Negbin => "negbin",
            Preset::PoissonRw => "poisson_rw",
            Preset::PoissonStructural => "poisson_structural",
            Preset::LinearGaussian => "linear_gaussian",
        }
    }

    pub fn parse(name: &str) -> Option<Preset> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// Model section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub preset: Preset,
    /// Outlier probability for the outlier presets.
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub leverage_timing: LeverageTiming,
    /// Mean and variance of the initial state (SV log-volatility, or the
    /// linear-Gaussian state).
    #[serde(default)]
    pub x0_mean: Option<f64>,
    #[serde(default)]
    pub x0_var: Option<f64>,
    #[serde(default)]
    pub structural: StructuralOptions,
    /// Dataset columns used as covariates by the structural model.
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl ModelSpec {
    pub fn new(preset: Preset) -> Self {
        Self {
            preset,
            omega: None,
            leverage_timing: LeverageTiming::default(),
            x0_mean: None,
            x0_var: None,
            structural: StructuralOptions::default(),
            covariates: Vec::new(),
        }
    }
}

/// A concrete model chosen at run time.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Sv(SvModel),
    NegBin(NegBinModel),
    PoissonRw(PoissonRwModel),
    Structural(PoissonStructuralModel),
    LinearGaussian(LinearGaussianModel),
}

/// Evaluates `$body` with `$m` bound to the concrete model inside `$any`.
#[macro_export]
macro_rules! with_model {
    ($any:expr, $m:ident => $body:expr) => {
        match $any {
            $crate::models::AnyModel::Sv($m) => $body,
            $crate::models::AnyModel::NegBin($m) => $body,
            $crate::models::AnyModel::PoissonRw($m) => $body,
            $crate::models::AnyModel::Structural($m) => $body,
            $crate::models::AnyModel::LinearGaussian($m) => $body,
        }
    };
}

impl AnyModel {
    /// Builds the model for a series of length `horizon`. `covariates` must
    /// hold every column named in `spec.covariates`.
    pub fn build(
        spec: &ModelSpec,
        covariates: &[(String, Vec<f64>)],
        horizon: usize,
    ) -> Result<AnyModel, ModelError> {
        let sv = |leverage: bool, outliers: bool| {
            let omega = if outliers { spec.omega.unwrap_or(DEFAULT_OUTLIER_PROB) } else { 0.0 };
            let mut m = SvModel::new(leverage, omega).with_timing(spec.leverage_timing);
            if let Some(v) = spec.x0_mean {
                m.x0_mean = v;
            }
            if let Some(v) = spec.x0_var {
                m.x0_var = v;
            }
            AnyModel::Sv(m)
        };
        if spec.omega.is_some() && !matches!(spec.preset, Preset::SvOutlier | Preset::SvLeverageOutlier) {
            return Err(ModelError::Config(format!("omega applies only to outlier presets, not {}", spec.preset.name())));
        }
        if !spec.covariates.is_empty() && spec.preset != Preset::PoissonStructural {
            return Err(ModelError::Config("covariates apply only to poisson_structural".into()));
        }
        Ok(match spec.preset {
            Preset::Sv => sv(false, false),
            Preset::SvLeverage => sv(true, false),
            Preset::SvOutlier => sv(false, true),
            Preset::SvLeverageOutlier => sv(true, true),
            Preset::Negbin => AnyModel::NegBin(NegBinModel),
            Preset::PoissonRw => AnyModel::PoissonRw(PoissonRwModel),
            Preset::PoissonStructural => {
                let mut cols = Vec::with_capacity(spec.covariates.len());
                for name in &spec.covariates {
                    let col = covariates
                        .iter()
                        .find(|(n, _)| n == name)
                        .ok_or_else(|| ModelError::Config(format!("covariate column `{name}` not found")))?;
                    cols.push(col.clone());
                }
                AnyModel::Structural(PoissonStructuralModel::new(spec.structural.clone(), cols, horizon)?)
            }
            Preset::LinearGaussian => AnyModel::LinearGaussian(LinearGaussianModel::new(
                spec.x0_mean.unwrap_or(0.0),
                spec.x0_var.unwrap_or(1.0),
            )),
        })
    }

    pub fn name(&self) -> &str {
        with_model!(self, m => m.name())
    }

    pub fn template(&self) -> ParameterVector {
        with_model!(self, m => m.template())
    }

    pub fn count_data(&self) -> bool {
        with_model!(self, m => m.count_data())
    }

    /// The shipped prior for every parameter of the template, fixed or not.
    pub fn default_priors(&self) -> PriorSpec {
        let mut spec = PriorSpec::new();
        for p in self.template().entries() {
            if let Some(prior) = default_prior(self, &p.name) {
                spec = spec.with(&p.name, prior);
            }
        }
        spec
    }
}

fn default_prior(model: &AnyModel, name: &str) -> Option<Prior> {
    let normal = |mean: f64, sd: f64| Prior::Normal { mean, sd };
    let half = |scale: f64| Prior::HalfNormal { scale };
    Some(match (model, name) {
        (AnyModel::Sv(_), "mu") => normal(0.0, 10.0),
        (AnyModel::Sv(_), "phi") => Prior::TruncNormal { loc: 0.9, scale: 0.1, lo: 0.0, hi: 1.0 },
        (AnyModel::Sv(_), "sigma2_eta") => Prior::InverseGamma { shape: 0.01, scale: 0.01 },
        (AnyModel::Sv(_), "rho") => Prior::TruncNormal { loc: 0.0, scale: 1e6, lo: -1.0, hi: 1.0 },
        (AnyModel::NegBin(_), "nu") => half(5.0),
        (AnyModel::NegBin(_), "beta") => half(5.0),
        (AnyModel::NegBin(_), "alpha") => half(20.0),
        (AnyModel::PoissonRw(_), "sigma2") => half(1.0),
        (AnyModel::PoissonRw(_), "mu0") => normal(0.4324, 9.0),
        (AnyModel::Structural(_), "mu0") => normal(-8.3779, 1.5f64.sqrt()),
        (AnyModel::Structural(_), "a0") => normal(0.0, 0.005f64.sqrt()),
        (AnyModel::Structural(_), "sigma2") => half(0.2f64.sqrt()),
        (AnyModel::Structural(_), "tau2") => half(0.002f64.sqrt()),
        (AnyModel::Structural(_), "delta") => normal(0.0, 1.0),
        (AnyModel::Structural(_), n) if n.starts_with("beta_") => normal(0.0, 1.0),
        (AnyModel::Structural(_), n) if n.starts_with("alpha_") || n.starts_with("gamma_") => {
            normal(0.0, 0.005f64.sqrt())
        }
        (AnyModel::LinearGaussian(_), "a") => Prior::Uniform { lo: -1.0, hi: 1.0 },
        (AnyModel::LinearGaussian(_), "q") | (AnyModel::LinearGaussian(_), "r") => half(1.0),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_has_priors_for_free_parameters() {
        for preset in Preset::ALL {
            let model = AnyModel::build(&ModelSpec::new(preset), &[], 20).unwrap();
            let template = model.template();
            model.default_priors().check(&template).unwrap();
            assert_eq!(Preset::parse(preset.name()), Some(preset));
        }
    }

    #[test]
    fn missing_covariate_is_config_error() {
        let mut spec = ModelSpec::new(Preset::PoissonStructural);
        spec.covariates = vec!["children".into()];
        assert!(matches!(AnyModel::build(&spec, &[], 10), Err(ModelError::Config(_))));
    }
}
