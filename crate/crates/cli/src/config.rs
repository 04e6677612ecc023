//! JSON configuration schemas for the subcommands.
//!
//! Configs are strict: unknown fields, wrong types (including negative
//! seeds — seeds are u64), and structurally invalid parameters are all
//! configuration errors, mapped to exit code 2 by the binary.

use std::path::Path;

use levy_garch::{GarchParams, NoiseModel, UGrid};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {reason}")]
    Invalid { reason: String },
}

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })
}

fn invalid(reason: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        reason: reason.to_string(),
    }
}

/// GARCH coefficients as named fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl ParamsConfig {
    pub fn to_params(&self) -> Result<GarchParams, ConfigError> {
        GarchParams::new(self.alpha0, self.alpha.clone(), self.beta.clone()).map_err(invalid)
    }
}

pub fn grid_from(points: &Option<Vec<f64>>) -> Result<UGrid, ConfigError> {
    match points {
        Some(p) => UGrid::new(p.clone()).map_err(invalid),
        None => Ok(UGrid::default_eight()),
    }
}

fn default_burn_in() -> usize {
    1_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: ParamsConfig,
    pub noise: NoiseModel,
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
    /// Also emit the sigma2/eps columns.
    #[serde(default)]
    pub include_state: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub noise: NoiseModel,
    pub r: usize,
    pub s: usize,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub transient: Option<usize>,
    #[serde(default)]
    pub local_radius: Option<f64>,
    #[serde(default)]
    pub half_grad_tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub rebuild_weighting: Option<bool>,
    /// Spurious-root screen width in standard errors; 0 disables it.
    #[serde(default)]
    pub consistency_band: Option<f64>,
}

impl EstimateConfig {
    pub fn to_options(&self) -> Result<levy_garch::EcfOptions, ConfigError> {
        let mut opts = levy_garch::EcfOptions {
            grid: grid_from(&self.grid)?,
            transient: self.transient,
            ..Default::default()
        };
        if let Some(v) = self.local_radius {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("local_radius must be positive, got {v}")));
            }
            opts.local_radius = v;
        }
        if let Some(v) = self.half_grad_tol {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("half_grad_tol must be positive, got {v}")));
            }
            opts.half_grad_tol = v;
        }
        if let Some(v) = self.max_iter {
            opts.max_iter = v;
        }
        if let Some(v) = self.rebuild_weighting {
            opts.rebuild_weighting = v;
        }
        if let Some(v) = self.consistency_band {
            if v == 0.0 {
                opts.consistency_band = None;
            } else if v.is_finite() && v > 0.0 {
                opts.consistency_band = Some(v);
            } else {
                return Err(invalid(format!(
                    "consistency_band must be positive or 0 to disable, got {v}"
                )));
            }
        }
        Ok(opts)
    }
}

fn default_reference_n() -> usize {
    400_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Data-generating parameters.
    pub params: ParamsConfig,
    pub noise: NoiseModel,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Run a Gaussian QML arm on the same replications.
    #[serde(default = "default_true")]
    pub ml_arm: bool,
    /// Additional ECF arms on the same replications (common random numbers).
    #[serde(default)]
    pub extra_grids: Vec<Vec<f64>>,
    #[serde(default)]
    pub local_radius: Option<f64>,
    /// Sample size of the long reference series fixing M*.
    #[serde(default = "default_reference_n")]
    pub reference_n: usize,
}

fn default_delta() -> f64 {
    0.25
}

fn default_m_max() -> usize {
    40
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub noise: NoiseModel,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeStageConfig {
    /// Data-generating parameters for simulated mode (ignored when the
    /// binary is given an observed series).
    pub params: ParamsConfig,
    /// True data-generating noise for simulated mode.
    pub noise: NoiseModel,
    pub r: usize,
    pub s: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Shape grid bracketing the ν search.
    #[serde(default)]
    pub nu_grid: Option<Vec<f64>>,
    /// Local-domain radius for the misspecified Gaussian arm, which must
    /// reach a pseudo-true point biased away from the initializer.
    #[serde(default)]
    pub misspec_radius: Option<f64>,
}

fn default_orders() -> Vec<u32> {
    vec![2, 4]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaMcConfig {
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub reps: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub params: ParamsConfig,
    pub noise: NoiseModel,
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    /// Also estimate λ_q by Monte Carlo.
    #[serde(default)]
    pub lambda_mc: Option<LambdaMcConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_seed_is_a_type_error() {
        let text = r#"{
            "params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"},
            "n": 100, "seed": -4
        }"#;
        let err = serde_json::from_str::<SimulateConfig>(text).unwrap_err();
        // Rejected by the u64 type itself, before any range check of ours.
        assert!(err.to_string().contains("expected u64"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
            "params": {"alpha0": 0.1, "alpha": [0.2], "beta": [0.7]},
            "noise": {"family": "gaussian"},
            "n": 100, "seed": 4, "typo_field": 1
        }"#;
        assert!(serde_json::from_str::<SimulateConfig>(text).is_err());
    }

    #[test]
    fn invalid_params_surface_as_config_errors() {
        let cfg = ParamsConfig {
            alpha0: -1.0,
            alpha: vec![0.2],
            beta: vec![],
        };
        assert!(matches!(
            cfg.to_params(),
            Err(ConfigError::Invalid { .. })
        ));
    }
}
