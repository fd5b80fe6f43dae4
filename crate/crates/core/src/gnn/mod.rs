//! Message-passing anomaly classifier on top of fused motif features.

mod checkpoint;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::{bce_loss, sigmoid};
pub use model::{
    forward, record_forward, DropoutMode, ForwardOutput, LayerParams, ModelInputs, ModelParams, Recorded,
};
pub use optim::Adam;
pub use train::{train, EpochRecord, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation after layer {layer}")]
    NonFinite { layer: usize },
    #[error("loss diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("empty node set")]
    EmptyNodeSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint config does not match the expected model")]
    ConfigMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Feature(#[from] crate::motif_features::FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Gcn,
    SageMean,
}

impl std::str::FromStr for Backbone {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gcn" => Ok(Backbone::Gcn),
            "sage_mean" | "sage" => Ok(Backbone::SageMean),
            _ => Err(format!("unknown backbone '{s}' (expected gcn or sage_mean)")),
        }
    }
}

/// Shape-determining architecture settings; checkpoints must match exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden: usize,
    pub in_dim: usize,
    /// Linear layers in the fusion MLP; 0 is the identity.
    pub fusion_depth: usize,
    pub use_motif_features: bool,
    /// `log1p` the motif counts before the feature product.
    pub log_counts: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: Backbone::Gcn,
            layers: 2,
            hidden: 64,
            in_dim: crate::graph::BASE_FEATURE_DIM,
            fusion_depth: 2,
            use_motif_features: true,
            log_counts: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        if self.layers == 0 {
            return Err(GnnError::InvalidConfig("layers must be >= 1".into()));
        }
        if self.hidden == 0 || self.in_dim == 0 {
            return Err(GnnError::InvalidConfig("hidden and in_dim must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub model: ModelConfig,
    pub dropout: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self { model: ModelConfig::default(), dropout: 0.0, learning_rate: 1e-3, max_epochs: 200, patience: 20, seed: 0 }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        self.model.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GnnError::InvalidConfig("dropout must be in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GnnError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
