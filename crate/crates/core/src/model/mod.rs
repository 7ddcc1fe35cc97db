//! Dual-stream impairment classifier: one strided convolutional encoder per
//! foot, concatenated features, and an MLP head with batch normalization,
//! ReLU and dropout. Trained with cross-entropy and Adam, early-stopped on a
//! validation slice carved out of the training split.

pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod gradcheck;
pub mod net;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{build_dataset, items_from_segments, Dataset, DatasetItem};
pub use eval::{evaluate, predict, EvalReport};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use net::Net;
pub use train::{train, EpochRecord, TrainedModel};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("gradient check failed for {tensor}[{index}]: relative error {rel_err:.3e}")]
    GradientMismatch { tensor: String, index: usize, rel_err: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub map_height: usize,
    pub map_width: usize,
    /// output channels of each stride-2 3x3 conv block
    pub conv_channels: Vec<usize>,
    /// per-foot feature size F
    pub feature_dim: usize,
    /// hidden widths of the head after the 2F concatenation
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// share of the training split held out to drive early stopping
    pub val_fraction: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// zero the output layer so an untrained model is exactly uniform
    pub zero_init_final: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl ModelConfig {
    /// 56x56 maps, F = 128, head 256 → 1024 → 256 → 3.
    pub fn desk_scale() -> Self {
        Self {
            map_height: 56,
            map_width: 56,
            conv_channels: vec![8, 16, 32],
            feature_dim: 128,
            hidden: vec![1024, 256],
            dropout: 0.3,
            lr: 1e-4,
            weight_decay: 1e-5,
            batch_size: 32,
            patience: 15,
            max_epochs: 200,
            val_fraction: 0.1,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            zero_init_final: true,
            seed: 0,
        }
    }

    /// 224x224 maps, F = 2048, head 4096 → 1024 → 256 → 3.
    pub fn full_scale() -> Self {
        Self {
            map_height: 224,
            map_width: 224,
            conv_channels: vec![32, 64, 128],
            feature_dim: 2048,
            ..Self::desk_scale()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.map_height == 0 || self.map_width == 0 {
            return bad("map size must be positive");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels must be nonempty and positive");
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 || self.batch_size < 2 {
            return bad("lr > 0, weight_decay >= 0 and batch_size >= 2 required");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Head layer widths including input and the 3-way output.
    pub fn head_dims(&self) -> Vec<usize> {
        let mut d = vec![2 * self.feature_dim];
        d.extend(&self.hidden);
        d.push(NUM_CLASSES);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dims_at_both_scales() {
        assert_eq!(ModelConfig::desk_scale().head_dims(), vec![256, 1024, 256, 3]);
        assert_eq!(ModelConfig::full_scale().head_dims(), vec![4096, 1024, 256, 3]);
    }

    #[test]
    fn config_validation() {
        ModelConfig::desk_scale().validate().unwrap();
        let mut c = ModelConfig::desk_scale();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }
}
