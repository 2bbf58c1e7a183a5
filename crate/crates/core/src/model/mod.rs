//! The EfficientNet-1D classifier with wide-feature conditioning.

mod config;
mod network;
mod predict;

pub use config::{ModelConfig, StageOp, StageSpec, STAGES, WIDE_FEATURES};
pub use network::{Network, NetworkMeta};
pub use predict::{predict, probabilities, Prediction, DEFAULT_THRESHOLD};
