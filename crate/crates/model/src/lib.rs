//! Prior-guided continuous tokenizer, depth-stratified mixture-of-experts
//! transformer, stage-specific heads, and the training objectives.

pub mod attention;
pub mod config;
pub mod features;
pub mod heads;
pub mod losses;
pub mod masking;
pub mod model;
pub mod moe;
pub mod prior;
pub mod selector;
pub mod transformer;

pub use config::{ModelConfig, SharedSplit, Stage, Variant};
pub use masking::{MaskKind, MaskPlan};
pub use model::{EncodeOpts, EncodeOut, Model};
pub use moe::{update_router_bias, LayerStats};
pub use transformer::{LayerKind, LayerSpec};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("config: {0}")]
    BadConfig(String),
    #[error("unknown channel {0:?} in montage for this model")]
    UnknownChannel(String),
    #[error("batch shape {got:?} does not match model (expected {expected})")]
    BadBatch { got: Vec<usize>, expected: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tensor(#[from] stratum_tensor::TensorError),
    #[error(transparent)]
    Signal(#[from] stratum_signal::SignalError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
