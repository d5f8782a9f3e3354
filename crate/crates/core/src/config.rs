//! Experiment configuration stored as a flat TOML key/value file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SynthMode;
use crate::error::{argument, Error, Result};
use crate::losses::{LossSpec, DEFAULT_ORACLE_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Logistic,
    Squared,
}

impl FromStr for LossName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossName::Logistic),
            "squared" => Ok(LossName::Squared),
            other => Err(argument(format!(
                "unknown loss `{other}` (logistic, squared)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    None,
    /// Normal equations; squared loss only.
    Closed,
    /// Whatever the loss needs, gradient descent for logistic loss.
    Iter,
}

impl FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(OracleMode::None),
            "closed" | "closed_form" => Ok(OracleMode::Closed),
            "iter" | "iterative" => Ok(OracleMode::Iter),
            other => Err(argument(format!(
                "unknown oracle `{other}` (none, closed, iter)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(argument(format!("unknown format `{other}` (csv, json)"))),
        }
    }
}

/// `f_i*` for SP: a constant, or the per-sample values from the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FiStarSetting {
    Value(f64),
    Named(FiStarSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiStarSource {
    Oracle,
}

impl FromStr for FiStarSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(FiStarSetting::Named(FiStarSource::Oracle));
        }
        s.parse::<f64>()
            .map(FiStarSetting::Value)
            .map_err(|_| argument(format!("--fi-star takes a number or `oracle`, got `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Constant,
    Decreasing,
}

pub const DEFAULT_GAMMA_GRID: [f64; 7] = [0.01, 0.1, 0.4, 0.7, 0.9, 1.0, 1.1];
pub const DEFAULT_GAMMA_TAU_GRID: [f64; 7] = [1e-5, 1e-4, 1e-3, 0.01, 0.1, 0.5, 0.9];

/// Step-cap used by `spsmax` when none is configured.
pub const DEFAULT_SPSMAX_CAP: f64 = 10.0;

/// Every experiment setting. Unset optional fields fall back to the
/// method's own default when the experiment is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// LIBSVM file; when absent a synthetic dataset is generated.
    pub dataset: Option<PathBuf>,
    pub synth_mode: SynthMode,
    pub synth_n: usize,
    pub synth_d: usize,
    pub synth_noise: f64,
    pub data_seed: u64,
    /// Scale every sample to unit L2 norm after loading.
    pub normalize: bool,

    pub loss: LossName,
    pub sigma: f64,

    pub method: String,
    pub gamma: Option<f64>,
    pub gamma_tau: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: f64,
    pub step_cap: Option<f64>,
    pub tau: f64,
    pub fi_star: FiStarSetting,
    pub schedule: ScheduleName,
    /// Strong-convexity constant for the decreasing schedule; defaults to `sigma`.
    pub mu: Option<f64>,

    /// SGD schedule: `inverse`, `lmax_over_t` or `constant:<gamma>`.
    pub sgd_schedule: String,
    pub svrg_inner_len: Option<usize>,
    pub adam_alpha: f64,

    pub epochs: usize,
    pub seed: u64,
    pub oracle: OracleMode,
    pub oracle_budget: usize,

    pub gamma_grid: Vec<f64>,
    pub gamma_tau_grid: Vec<f64>,
    pub compare_methods: Vec<String>,

    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            synth_mode: SynthMode::Separable,
            synth_n: 100,
            synth_d: 20,
            synth_noise: 0.0,
            data_seed: 1,
            normalize: false,
            loss: LossName::Logistic,
            sigma: 0.0,
            method: "motaps".into(),
            gamma: None,
            gamma_tau: None,
            lambda: None,
            beta: 0.0,
            step_cap: None,
            tau: 0.0,
            fi_star: FiStarSetting::Value(0.0),
            schedule: ScheduleName::Constant,
            mu: None,
            sgd_schedule: "inverse".into(),
            svrg_inner_len: None,
            adam_alpha: 1e-3,
            epochs: 50,
            seed: 0,
            oracle: OracleMode::None,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            gamma_grid: DEFAULT_GAMMA_GRID.to_vec(),
            gamma_tau_grid: DEFAULT_GAMMA_TAU_GRID.to_vec(),
            compare_methods: ["sp", "taps", "motaps", "sgd", "sag", "svrg"]
                .map(String::from)
                .to_vec(),
            out: None,
            format: OutputFormat::Csv,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn loss_spec(&self) -> LossSpec {
        match self.loss {
            LossName::Logistic => LossSpec::logistic(self.sigma),
            LossName::Squared => LossSpec::squared(self.sigma),
        }
    }
}
