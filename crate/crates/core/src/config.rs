//! Declarative run configuration (TOML), including ablation sweep grids.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Delimiter, DuplicatePolicy};
use crate::error::{Error, Result};
use crate::model::{AttentionMode, Variant, VariantFlags};
use crate::train::TrainConfig;

/// Grids the sweep values must come from.
pub const ALPHA_GRID: [f64; 9] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
pub const DELTA_GRID: [u8; 4] = [0, 1, 2, 3];
pub const NEIGHBOR_CAP_GRID: [usize; 6] = [5, 10, 15, 20, 25, 30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset_dir: PathBuf,
    /// Relative to `dataset_dir` unless absolute.
    pub ratings_file: PathBuf,
    pub trust_file: PathBuf,
    pub delimiter: Delimiter,
    pub duplicates: DuplicatePolicy,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset_dir: PathBuf::from("data"),
            ratings_file: PathBuf::from("ratings.txt"),
            trust_file: PathBuf::from("trust.txt"),
            delimiter: Delimiter::Auto,
            duplicates: DuplicatePolicy::Reject,
            train_fraction: 0.6,
        }
    }
}

impl DataConfig {
    pub fn ratings_path(&self) -> PathBuf {
        self.dataset_dir.join(&self.ratings_file)
    }

    pub fn trust_path(&self) -> PathBuf {
        self.dataset_dir.join(&self.trust_file)
    }
}

/// Axes for `ablate`. Each non-empty list becomes a block of rows varying
/// that one setting from the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub variants: Vec<Variant>,
    pub attention: Vec<AttentionMode>,
    pub alpha: Vec<f64>,
    pub delta: Vec<u8>,
    pub neighbor_cap: Vec<usize>,
    /// Train cells concurrently, each with its own state.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            variants: vec![Variant::Rc, Variant::Sn, Variant::Rd],
            attention: vec![AttentionMode::UniformAvg, AttentionMode::Max],
            alpha: Vec::new(),
            delta: Vec::new(),
            neighbor_cap: Vec::new(),
            parallel: false,
        }
    }
}

impl SweepConfig {
    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
            && self.attention.is_empty()
            && self.alpha.is_empty()
            && self.delta.is_empty()
            && self.neighbor_cap.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for &a in &self.alpha {
            if !ALPHA_GRID.iter().any(|g| (g - a).abs() < 1e-9) {
                return Err(Error::Config(format!("alpha {a} is not in the grid {ALPHA_GRID:?}")));
            }
        }
        for d in &self.delta {
            if !DELTA_GRID.contains(d) {
                return Err(Error::Config(format!("delta {d} is not in the grid {DELTA_GRID:?}")));
            }
        }
        for k in &self.neighbor_cap {
            if !NEIGHBOR_CAP_GRID.contains(k) {
                return Err(Error::Config(format!(
                    "neighbor_cap {k} is not in the grid {NEIGHBOR_CAP_GRID:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Clamp reported predictions to [1, 5]. Losses always see raw values.
    pub clamp_predictions: bool,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub variant: VariantFlags,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            clamp_predictions: false,
            data: DataConfig::default(),
            train: TrainConfig::default(),
            variant: VariantFlags::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.data.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("train_fraction must lie in (0, 1), got {f}")));
        }
        self.train.validate()?;
        self.variant.validate()?;
        self.sweep.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::Task;

    #[test]
    fn round_trip_default_and_custom() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);

        let mut cfg = RunConfig::default();
        cfg.train.task = Task::Ranking;
        cfg.train.learning_rate = 1e-5;
        cfg.variant.attention = AttentionMode::Max;
        cfg.variant.alpha = 0.2;
        cfg.sweep.alpha = ALPHA_GRID.to_vec();
        cfg.sweep.delta = vec![0, 3];
        cfg.data.delimiter = Delimiter::Tab;
        cfg.data.duplicates = DuplicatePolicy::LastWins;
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("[train]\ndim = 16\n[variant]\nattention = \"avg\"\n").unwrap();
        assert_eq!(cfg.train.dim, 16);
        assert_eq!(cfg.train.neighbor_cap, 10);
        assert_eq!(cfg.variant.attention, AttentionMode::UniformAvg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_toml("[train]\ndimm = 3\n").is_err());
        let mut cfg = RunConfig::default();
        cfg.sweep.alpha = vec![0.3];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.sweep.delta = vec![4];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.data.train_fraction = 1.0;
        assert!(cfg.validate().is_err());
        RunConfig::default().validate().unwrap();
    }
}
