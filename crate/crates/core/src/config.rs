//! Pipeline configuration: model architecture, loss weights, masking, the
//! two training phases and the synthetic generator, loadable from JSON or
//! TOML files.
//!
//! Phase defaults follow the training recipe: pre-training runs 400 epochs
//! of AdamW at lr 1.5e-4 with 40 warm-up epochs, cosine annealing, weight
//! decay 0.05, batch 256 and mask ratio 0.8; the pose decoder runs 50 epochs
//! at lr 1e-3 with batch 32 (SGD, weight decay 0.01). The loss temperature
//! and trade-off weights (`tau` 0.1, `lambda_cl` 1.0, `lambda_unif` 0.5) are
//! artifact defaults, not published values, and are plain config keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::masking::MaskStrategy;
use crate::pose::PoseDecoderConfig;
use crate::pretrain::ReconScope;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Decode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adamw,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Cosine,
    Constant,
}

/// One training phase's hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: Phase,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub schedule: Schedule,
    pub seed: u64,
    /// Global-norm gradient clipping; off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn pretrain_defaults() -> Self {
        TrainConfig {
            phase: Phase::Pretrain,
            optimizer: OptimizerKind::Adamw,
            epochs: 400,
            batch_size: 256,
            lr: 1.5e-4,
            weight_decay: 0.05,
            warmup_epochs: 40,
            schedule: Schedule::Cosine,
            seed: 0,
            grad_clip: None,
        }
    }

    pub fn decode_defaults() -> Self {
        TrainConfig {
            phase: Phase::Decode,
            optimizer: OptimizerKind::Sgd,
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.01,
            warmup_epochs: 1,
            schedule: Schedule::Constant,
            seed: 0,
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.warmup_epochs == 0 {
            return Err(Error::config(
                "epochs, batch_size and warmup_epochs must be positive",
            ));
        }
        if !(self.lr > 0.0) || !(self.weight_decay > 0.0) {
            return Err(Error::config("lr and weight_decay must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("grad_clip must be positive when set"));
            }
        }
        Ok(())
    }
}

/// Overrides parsed from a config file section; unset keys fall back to the
/// phase defaults.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub optimizer: Option<OptimizerKind>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub warmup_epochs: Option<usize>,
    pub schedule: Option<Schedule>,
    pub seed: Option<u64>,
    pub grad_clip: Option<f64>,
}

impl TrainOverrides {
    fn apply(self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.optimizer {
            base.optimizer = v;
        }
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.lr {
            base.lr = v;
        }
        if let Some(v) = self.weight_decay {
            base.weight_decay = v;
        }
        if let Some(v) = self.warmup_epochs {
            base.warmup_epochs = v;
        }
        if let Some(v) = self.schedule {
            base.schedule = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if self.grad_clip.is_some() {
            base.grad_clip = self.grad_clip;
        }
        base
    }
}

fn default_tau() -> f64 {
    0.1
}
fn default_lambda_cl() -> f64 {
    1.0
}
fn default_lambda_unif() -> f64 {
    0.5
}

/// Pre-training loss weights: `tau` (InfoNCE temperature), the trade-off
/// weights and the reconstruction scope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda_cl: f64,
    pub lambda_unif: f64,
    pub scope: ReconScope,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: default_tau(),
            lambda_cl: default_lambda_cl(),
            lambda_unif: default_lambda_unif(),
            scope: ReconScope::All,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("loss.tau must be positive, got {}", self.tau)));
        }
        if self.lambda_cl < 0.0 || self.lambda_unif < 0.0 {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

fn default_ratio() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub strategy: MaskStrategy,
    pub ratio: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { strategy: MaskStrategy::Unstructured, ratio: default_ratio() }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::config(format!(
                "mask.ratio must lie in [0, 1), got {}",
                self.ratio
            )));
        }
        Ok(())
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub model: EncoderConfig,
    pub loss: LossConfig,
    pub mask: MaskConfig,
    pub pretrain: TrainConfig,
    pub decode: TrainConfig,
    pub decoder: PoseDecoderConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: EncoderConfig::default(),
            loss: LossConfig::default(),
            mask: MaskConfig::default(),
            pretrain: TrainConfig::pretrain_defaults(),
            decode: TrainConfig::decode_defaults(),
            decoder: PoseDecoderConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PipelineConfigFile {
    model: Option<EncoderConfig>,
    loss: Option<LossConfig>,
    mask: Option<MaskConfig>,
    pretrain: TrainOverrides,
    decode: TrainOverrides,
    decoder: Option<PoseDecoderConfig>,
    synth: Option<SynthConfig>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.mask.validate()?;
        self.pretrain.validate()?;
        self.decode.validate()?;
        self.decoder.validate()?;
        self.synth.validate()?;
        if self.loss.scope == ReconScope::MaskedOnly && self.mask.ratio == 0.0 {
            return Err(Error::config(
                "loss.scope = masked_only requires a nonzero mask.ratio",
            ));
        }
        Ok(())
    }

    fn from_file_struct(file: PipelineConfigFile) -> Self {
        PipelineConfig {
            model: file.model.unwrap_or_default(),
            loss: file.loss.unwrap_or_default(),
            mask: file.mask.unwrap_or_default(),
            pretrain: file.pretrain.apply(TrainConfig::pretrain_defaults()),
            decode: file.decode.apply(TrainConfig::decode_defaults()),
            decoder: file.decoder.unwrap_or_default(),
            synth: file.synth.unwrap_or_default(),
        }
    }

    /// Parse a JSON or TOML config file (by extension), fill defaults and
    /// validate.
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let file: PipelineConfigFile = match ext {
            "json" => serde_json::from_str(&raw)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
            "toml" => toml::from_str(&raw)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
            other => {
                return Err(Error::config(format!(
                    "config file must end in .json or .toml, got '.{other}'"
                )))
            }
        };
        let cfg = Self::from_file_struct(file);
        cfg.validate()?;
        Ok(cfg)
    }
}
