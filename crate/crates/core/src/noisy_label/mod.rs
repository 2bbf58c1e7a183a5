//! Sample division, label refinement, pooled-vector mixup and twin-network co-training.

mod config;
mod gmm;
mod loss;
mod mixup;
mod objective;
mod refine;
mod train;

pub use config::TrainConfig;
pub use gmm::{fit_gmm2, Gaussian, Gmm2, SamplePartition, CLEAN_CUTOFF, VARIANCE_FLOOR};
pub use loss::{bce, per_sample_loss, sample_bce, PROB_CLAMP};
pub use mixup::{manifold_mixup, sample_lambda_mix, MixPlan};
pub use objective::{bce_with_logits, objective, Objective};
pub use refine::{coguess_noisy, lerp, refine_clean};
pub use train::{
    mixed_step, refresh_batches, train, train_baseline, train_with, CoTrainState, EpochMetrics, NetEpochMetrics,
    Phase, RunWriter, METRICS_FILE,
};
