//! Scenario files (TOML).
//!
//! ```toml
//! ks = [1, 2, 3]
//! method = "both"
//!
//! [model]
//! kind = "homogeneous"
//! n = 10
//! a = 1.0
//! c = 3.0
//!
//! [contract]
//! maturity = 3.0
//! period = 0.5
//! recovery = 0.5
//! rate = 0.05
//!
//! [mc_plan]
//! paths = 100000
//! seed = 42
//! ```

use std::path::{Path, PathBuf};

use basket_cds::model::ModelSpec;
use basket_cds::montecarlo::SimulationPlan;
use basket_cds::pricing::SwapContract;
use basket_cds::quadrature::QuadratureConfig;
use basket_cds::CdsError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Analytic,
    Mc,
    Both,
}

impl Method {
    pub fn analytic(self) -> bool {
        matches!(self, Self::Analytic | Self::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Self::Mc | Self::Both)
    }
}

/// Either a regular schedule (`period`) or explicit `payment_times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub maturity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payment_times: Option<Vec<f64>>,
    pub recovery: f64,
    pub rate: f64,
}

impl ContractConfig {
    pub fn build(&self) -> CliResult<SwapContract> {
        let built = match (self.period, &self.payment_times) {
            (Some(p), None) => SwapContract::regular(self.maturity, p, self.recovery, self.rate),
            (None, Some(times)) => SwapContract::new(self.maturity, times.clone(), self.recovery, self.rate),
            _ => {
                return Err(CliError::config(
                    "contract",
                    "give exactly one of `period` or `payment_times`",
                ))
            }
        };
        built.map_err(|e| scoped("contract", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ks: Vec<usize>,
    #[serde(default)]
    pub method: Method,
    pub model: ModelSpec,
    pub contract: ContractConfig,
    #[serde(default)]
    pub mc_plan: Option<SimulationPlan>,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

/// Maps a parameter error onto a field path under `prefix`.
pub(crate) fn scoped(prefix: &str, err: CdsError) -> CliError {
    match err {
        CdsError::InvalidParameter { name, reason } => CliError::config(format!("{prefix}.{name}"), reason),
        other => CliError::config(prefix, other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate().map_err(|e| scoped("model", e))?;
        self.contract.build()?;
        let n = self.model.names();
        if self.ks.is_empty() {
            return Err(CliError::config("ks", "at least one seniority is required"));
        }
        if let Some(k) = self.ks.iter().find(|&&k| k < 1 || k > n) {
            return Err(CliError::config("ks", format!("seniority {k} is outside [1, {n}]")));
        }
        if self.method.analytic() && !self.model.has_analytic_law() {
            return Err(CliError::config(
                "method",
                format!(
                    "model `{}` can only be priced by simulation; use method = \"mc\"",
                    self.model.label()
                ),
            ));
        }
        if let Some(plan) = &self.mc_plan {
            plan.validate().map_err(|e| scoped("mc_plan", e))?;
        }
        if let Some(q) = &self.quadrature {
            q.validate().map_err(|e| scoped("quadrature", e))?;
        }
        Ok(())
    }

    pub fn plan(&self) -> SimulationPlan {
        self.mc_plan
            .unwrap_or_else(|| SimulationPlan::new(DEFAULT_PATHS, DEFAULT_SEED))
    }

    pub fn quad(&self) -> QuadratureConfig {
        self.quadrature.unwrap_or_default()
    }
}
