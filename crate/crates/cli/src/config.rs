use std::path::{Path, PathBuf};

use hmkit::optim::OptimConfig;
use hmkit::sync::{SyncParams, DEFAULT_MATCH_WINDOW, DEFAULT_MIN_PROMINENCE};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Noise added to the sensor-based initialization before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationPreset {
    #[default]
    None,
    /// 0.05 m and 0.02 rad.
    Easy,
    /// 0.1 m and 0.05 rad.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub preset: PerturbationPreset,
    /// Overrides the preset's translation sigma, meters.
    pub trans_sigma: Option<f64>,
    /// Overrides the preset's pose sigma, radians.
    pub pose_sigma: Option<f64>,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            preset: PerturbationPreset::None,
            trans_sigma: None,
            pose_sigma: None,
        }
    }
}

impl Perturbation {
    pub fn sigmas(&self) -> (f64, f64) {
        let (t, p) = match self.preset {
            PerturbationPreset::None => (0.0, 0.0),
            PerturbationPreset::Easy => (0.05, 0.02),
            PerturbationPreset::Standard => (0.1, 0.05),
        };
        (self.trans_sigma.unwrap_or(t), self.pose_sigma.unwrap_or(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    /// Meters.
    pub min_prominence: f64,
    /// Seconds.
    pub match_window: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            min_prominence: DEFAULT_MIN_PROMINENCE,
            match_window: DEFAULT_MATCH_WINDOW,
        }
    }
}

impl From<SyncConfig> for SyncParams {
    fn from(c: SyncConfig) -> Self {
        SyncParams {
            min_prominence: c.min_prominence,
            match_window: c.match_window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Evaluate against ground truth when the bundle has it.
    pub enabled: bool,
    /// Also evaluate the initialization.
    pub include_initial: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            include_initial: true,
        }
    }
}

/// Settings for `run`. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub bundle: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub sync: SyncConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl PipelineConfig {
    pub fn new(bundle: PathBuf, output: PathBuf) -> Self {
        Self {
            bundle,
            output,
            seed: 0,
            perturbation: Perturbation::default(),
            sync: SyncConfig::default(),
            optim: OptimConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.bundle = base.join(&cfg.bundle);
        cfg.output = base.join(&cfg.output);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.optim.validate()?;
        let (t, p) = self.perturbation.sigmas();
        if !(t.is_finite() && t >= 0.0 && p.is_finite() && p >= 0.0) {
            return Err(CliError::Config(
                "perturbation sigmas must be finite and >= 0".into(),
            ));
        }
        if !(self.sync.min_prominence.is_finite() && self.sync.min_prominence >= 0.0) {
            return Err(CliError::Config(
                "sync.min_prominence must be finite and >= 0".into(),
            ));
        }
        if !(self.sync.match_window.is_finite() && self.sync.match_window > 0.0) {
            return Err(CliError::Config(
                "sync.match_window must be positive".into(),
            ));
        }
        Ok(())
    }
}
