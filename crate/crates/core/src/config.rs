//! Pipeline configuration: a versioned TOML file where unknown keys are
//! errors, not warnings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    /// Required whenever training or synthetic generation is enabled.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub levels: LevelsConfig,
    #[serde(default)]
    pub level3: Level3Config,
    #[serde(default)]
    pub level4: Level4Config,
    pub level5: Option<Level5Config>,
    pub level6: Option<Level6Config>,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub heatmap: HeatmapConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub meta: PathBuf,
    /// Offline dataset used for training and causal discovery.
    pub historical: Option<PathBuf>,
    /// Online dataset scored by levels II-V.
    pub evaluation: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LevelsConfig {
    /// Subset of {2, 3, 4, 5, 6}.
    pub enabled: Vec<u8>,
}

impl LevelsConfig {
    pub fn has(&self, level: u8) -> bool {
        self.enabled.contains(&level)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Level3Config {
    pub spike_window: usize,
    pub z_threshold: f64,
    pub stuck_min_run: usize,
    pub stuck_epsilon: f64,
    pub drift_window: usize,
    pub drift_slope_threshold: f64,
}

impl Default for Level3Config {
    fn default() -> Self {
        Self {
            spike_window: 64,
            z_threshold: 6.0,
            stuck_min_run: 30,
            stuck_epsilon: 0.0,
            drift_window: 64,
            drift_slope_threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Level4Config {
    pub window: usize,
    pub latent: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub input_dropout_rate: f64,
    pub stride: usize,
    pub perr_threshold: f64,
    pub min_run: usize,
    /// When set, the model is loaded from this file instead of trained.
    pub model: Option<PathBuf>,
}

impl Default for Level4Config {
    fn default() -> Self {
        Self {
            window: 32,
            latent: 8,
            hidden: vec![96],
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            input_dropout_rate: 0.3,
            stride: 1,
            perr_threshold: 5.0,
            min_run: 10,
            model: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Level5Config {
    pub simulation: PathBuf,
    #[serde(default = "default_rel_tolerance")]
    pub rel_tolerance: f64,
    #[serde(default = "default_sim_min_run")]
    pub min_run: usize,
}

fn default_rel_tolerance() -> f64 {
    0.05
}

fn default_sim_min_run() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Level6Config {
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Significance level; deliberately without a default so enabling Level
    /// VI forces an explicit choice.
    pub alpha: f64,
}

fn default_max_lag() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub coincidence_window: usize,
    pub neighbor_perr_ratio: f64,
    pub min_corroborating_neighbors: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            coincidence_window: 5,
            neighbor_perr_ratio: 0.5,
            min_corroborating_neighbors: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapConfig {
    pub bucket_len: usize,
    pub clamp_max: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            bucket_len: 60,
            clamp_max: 20.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {}",
                self.version
            )));
        }
        for &level in &self.levels.enabled {
            if !(2..=6).contains(&level) {
                return Err(Error::Config(format!("unknown level {level}")));
            }
        }
        let online = [2u8, 3, 4, 5].iter().any(|&l| self.levels.has(l));
        if online && self.data.evaluation.is_none() {
            return Err(Error::Config(
                "levels 2-5 need an evaluation dataset".into(),
            ));
        }
        if self.levels.has(4) && self.level4.model.is_none() {
            if self.data.historical.is_none() {
                return Err(Error::Config(
                    "level 4 without a model file needs a historical dataset for training".into(),
                ));
            }
            if self.seed.is_none() {
                return Err(Error::Config("level 4 training needs a seed".into()));
            }
        }
        if self.levels.has(5) && self.level5.is_none() {
            return Err(Error::Config("level 5 enabled but [level5] missing".into()));
        }
        if self.levels.has(6) {
            if self.level6.is_none() {
                return Err(Error::Config(
                    "level 6 enabled but [level6] (with alpha) missing".into(),
                ));
            }
            if self.data.historical.is_none() {
                return Err(Error::Config("level 6 needs a historical dataset".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
seed = 7

[data]
meta = "meta.csv"
historical = "train.csv"
evaluation = "eval.csv"

[levels]
enabled = [2, 3]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = PipelineConfig::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.level4.window, 32);
        assert_eq!(cfg.level3.z_threshold, 6.0);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{MINIMAL}\nbogus_key = 1\n");
        assert!(matches!(
            PipelineConfig::from_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn level6_without_alpha_is_config_error() {
        let text = MINIMAL.replace("enabled = [2, 3]", "enabled = [6]");
        assert!(matches!(
            PipelineConfig::from_str(&text),
            Err(Error::Config(_))
        ));
        let with_section = format!("{text}\n[level6]\nmax_lag = 3\n");
        assert!(matches!(
            PipelineConfig::from_str(&with_section),
            Err(Error::Config(_))
        ));
        let good = format!("{text}\n[level6]\nalpha = 0.01\n");
        PipelineConfig::from_str(&good).unwrap();
    }

    #[test]
    fn training_without_seed_rejected() {
        let text = MINIMAL
            .replace("enabled = [2, 3]", "enabled = [4]")
            .replace("seed = 7\n", "");
        assert!(matches!(
            PipelineConfig::from_str(&text),
            Err(Error::Config(_))
        ));
    }
}
