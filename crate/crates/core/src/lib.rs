//! Noisy-label training for multi-label classification of multichannel time series.
//!
//! Two co-trained 1D EfficientNet-style classifiers divide the training set for
//! each other with a two-component Gaussian mixture over per-sample losses,
//! refine labels of clean and noisy samples, mix pooled hidden vectors, and are
//! finally combined with their weight-averaged (SWA) copies into a four-member
//! ensemble.

pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod noisy_label;
pub mod signal_prep;
pub mod swa_ensemble;

pub use error::{Error, Result};
