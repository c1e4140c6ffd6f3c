use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::LrSchedule;
use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::losses::{HamlParams, MmlConfig};
use crate::synth::SynthConfig;

/// Hidden width used when `layer_sizes` is left out.
pub const DEFAULT_HIDDEN: usize = 128;

/// Learning-rate endpoints; decay is exponential over the epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrRange {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    pub use_decorr: bool,
    pub use_qml: bool,
    pub use_haml: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            use_decorr: true,
            use_qml: true,
            use_haml: true,
        }
    }
}

/// File locations. Missing dataset paths mean "generate from `synth`".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub test_dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Full encoder widths `[input, hidden.., n]`; derived from the data and
    /// `n` when absent.
    pub layer_sizes: Option<Vec<usize>>,
    pub n: usize,
    pub q: usize,
    pub batch_size: usize,
    /// Fine-tuning epochs.
    pub epochs: usize,
    /// Batches per epoch; 0 means one pass worth of samples.
    pub batches_per_epoch: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub lr: LrRange,
    pub mml: MmlConfig,
    pub haml: HamlParams,
    pub seed: u64,
    pub toggles: Toggles,
    pub synth: SynthConfig,
    pub paths: Paths,
    /// Seeds per ablation row.
    pub folds: usize,
    pub protocol: Protocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layer_sizes: None,
            n: 64,
            q: 64,
            batch_size: 16,
            epochs: 50,
            batches_per_epoch: 0,
            pretrain_epochs: 20,
            pretrain_lr: 0.05,
            lr: LrRange {
                initial: 0.005,
                final_lr: 0.00005,
            },
            mml: MmlConfig::default(),
            haml: HamlParams::default(),
            seed: 0,
            toggles: Toggles::default(),
            synth: SynthConfig::default(),
            paths: Paths::default(),
            folds: 5,
            protocol: Protocol::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.q == 0 || self.q > self.n {
            return Err(Error::Config(format!("q={} must satisfy 1 <= q <= n={}", self.q, self.n)));
        }
        if self.batch_size < 4 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "batch size {} must be even and at least 4",
                self.batch_size
            )));
        }
        if let Some(sizes) = &self.layer_sizes {
            if sizes.len() < 2 || sizes.contains(&0) {
                return Err(Error::Config(format!("layer sizes {sizes:?} need two or more non-zero widths")));
            }
            if sizes.last() != Some(&self.n) {
                return Err(Error::Config(format!("last layer width {:?} differs from n={}", sizes.last(), self.n)));
            }
        }
        if !(self.pretrain_lr > 0.0 && self.pretrain_lr.is_finite()) {
            return Err(Error::Config(format!("pretrain_lr {} must be positive", self.pretrain_lr)));
        }
        if self.epochs > 0 {
            LrSchedule::new(self.lr.initial, self.lr.final_lr, self.epochs)?;
        } else if !(self.lr.initial > 0.0 && self.lr.final_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        self.mml.validate()?;
        self.haml.validate()?;
        self.synth.validate()?;
        for &far in &self.protocol.fars {
            if !(0.0..=1.0).contains(&far) {
                return Err(Error::Config(format!("far {far} outside [0, 1]")));
            }
        }
        if self.protocol.ranks.contains(&0) {
            return Err(Error::Config("ranks start at 1".into()));
        }
        Ok(())
    }

    /// Encoder widths for data of the given input width.
    pub fn resolved_layer_sizes(&self, input_dim: usize) -> Result<Vec<usize>> {
        match &self.layer_sizes {
            Some(sizes) if sizes[0] != input_dim => Err(Error::ShapeMismatch {
                what: "encoder input width",
                found: input_dim,
                expected: sizes[0],
            }),
            Some(sizes) => Ok(sizes.clone()),
            None => Ok(vec![input_dim, DEFAULT_HIDDEN, DEFAULT_HIDDEN, self.n]),
        }
    }
}
