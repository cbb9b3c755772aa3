//! Pipeline configuration: one TOML file covering every command, with the
//! study-wide defaults baked in so a bare run works without any file.
//!
//! Every value here is echoed into the JSON manifest written next to each
//! command's outputs, so an artifact always records the exact configuration
//! that produced it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use waymode::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// GPS CSV consumed by `preprocess` (`user_id,timestamp,lat,lon[,mode]`).
    pub input_csv: PathBuf,
    /// Optional transit infrastructure CSV (`name,lat,lon,kind`).
    pub infrastructure_csv: Option<PathBuf>,
    /// Every artifact lands under this directory.
    pub output_dir: PathBuf,
    /// Rows per segment; 70 or 120.
    pub segment_length: usize,
    pub filters: Filters,
    pub library: Library,
    pub training: Training,
    pub ensemble: EnsembleCfg,
    pub eval: EvalCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Filters {
    /// Trips shorter than this many points are dropped.
    pub min_points: usize,
    /// Speed filter threshold, m/s.
    pub max_speed: f64,
    /// Acceleration filter threshold, m/s².
    pub max_accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryScale {
    /// Model A plus small grid draws; every entry trains in seconds.
    Desk,
    /// The full catalog: named models A–F plus grid draws over the complete
    /// hyper-parameter vocabulary. The deep entries need serious compute.
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Library {
    /// Number of base learners.
    pub size: usize,
    pub master_seed: u64,
    pub scale: LibraryScale,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    pub batch_size: usize,
    /// When set, overrides every library entry's own epoch budget.
    pub epochs: Option<usize>,
    pub patience: usize,
    pub learning_rate: f64,
    /// Dropout probability applied to each architecture's dropout layers.
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMethod {
    Average,
    Majority,
    Weights,
    Stack,
}

impl EnsembleMethod {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMethod::Average => "average",
            EnsembleMethod::Majority => "majority",
            EnsembleMethod::Weights => "weights",
            EnsembleMethod::Stack => "stack",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleCfg {
    pub method: EnsembleMethod,
    pub k_folds: usize,
    /// Trees in the stacking meta-learner forest.
    pub meta_trees: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCfg {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> PipelineConfig {
        PipelineConfig {
            input_csv: PathBuf::new(),
            infrastructure_csv: None,
            output_dir: PathBuf::from("out"),
            segment_length: 70,
            filters: Filters::default(),
            library: Library::default(),
            training: Training::default(),
            ensemble: EnsembleCfg::default(),
            eval: EvalCfg::default(),
        }
    }
}

impl Default for Filters {
    fn default() -> Filters {
        Filters {
            min_points: 10,
            max_speed: 62.5,
            max_accel: 10.0,
        }
    }
}

impl Default for Library {
    fn default() -> Library {
        Library {
            size: 8,
            master_seed: 17,
            scale: LibraryScale::Desk,
        }
    }
}

impl Default for Training {
    fn default() -> Training {
        Training {
            batch_size: 16,
            epochs: None,
            patience: 5,
            learning_rate: 1e-4,
            dropout: 0.5,
        }
    }
}

impl Default for EnsembleCfg {
    fn default() -> EnsembleCfg {
        EnsembleCfg {
            method: EnsembleMethod::Stack,
            k_folds: 5,
            meta_trees: 800,
        }
    }
}

impl Default for EvalCfg {
    fn default() -> EvalCfg {
        EvalCfg {
            test_fraction: 0.2,
            seed: 99,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("bad config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_length != 70 && self.segment_length != 120 {
            return Err(Error::config(format!(
                "segment_length must be 70 or 120, got {}",
                self.segment_length
            )));
        }
        if self.filters.min_points < 2 {
            return Err(Error::config("filters.min_points must be at least 2"));
        }
        if !(self.filters.max_speed > 0.0) || !(self.filters.max_accel > 0.0) {
            return Err(Error::config("filter thresholds must be positive"));
        }
        let min_size = match self.library.scale {
            LibraryScale::Desk => 1,
            // The full-scale library always starts with the six named models.
            LibraryScale::Full => 6,
        };
        if self.library.size < min_size {
            return Err(Error::config(format!(
                "library.size must be at least {min_size} for scale {:?}",
                self.library.scale
            )));
        }
        if self.training.batch_size == 0 {
            return Err(Error::config("training.batch_size must be positive"));
        }
        if self.training.epochs == Some(0) {
            return Err(Error::config("training.epochs must be positive when set"));
        }
        if !(self.training.learning_rate > 0.0) || !self.training.learning_rate.is_finite() {
            return Err(Error::config(
                "training.learning_rate must be positive and finite",
            ));
        }
        if !(0.0..1.0).contains(&self.training.dropout) {
            return Err(Error::config("training.dropout must be in [0, 1)"));
        }
        if self.ensemble.k_folds < 2 {
            return Err(Error::config("ensemble.k_folds must be at least 2"));
        }
        if self.ensemble.meta_trees == 0 {
            return Err(Error::config("ensemble.meta_trees must be positive"));
        }
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return Err(Error::config("eval.test_fraction must be in (0, 1)"));
        }
        Ok(())
    }

    pub fn segments_path(&self) -> PathBuf {
        self.output_dir.join("segments.seg")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn library_manifest_path(&self) -> PathBuf {
        self.models_dir().join("library.tsv")
    }

    pub fn ensemble_dir(&self) -> PathBuf {
        self.output_dir.join("ensemble")
    }
}
