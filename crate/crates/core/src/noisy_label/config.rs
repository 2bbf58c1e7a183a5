use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::AdamConfig;

/// Every training hyperparameter of both the noisy-label pipeline and the baseline trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Batch size of the plain cross-entropy baseline.
    pub baseline_batch_size: usize,
    /// Leading epochs trained with plain cross-entropy before sample division starts.
    pub warmup_epochs: usize,
    pub em_iters: usize,
    /// Weight of the averaged network predictions in co-guessed targets.
    pub lambda_n: f64,
    /// Beta distribution parameter of the mixing coefficient.
    pub mixup_alpha: f64,
    /// Trailing epochs whose snapshots are weight-averaged.
    pub swa_epochs: usize,
    pub threshold: f64,
    /// Upper bound on samples swept to refresh batch-norm statistics after averaging.
    pub bn_refresh_samples: usize,
    /// Channel counts of the architecture are divided by this; 1 keeps full width.
    pub width_divisor: usize,
    /// Inference chunk size.
    pub eval_chunk: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 160,
            baseline_batch_size: 240,
            warmup_epochs: 2,
            em_iters: 10,
            lambda_n: 0.5,
            mixup_alpha: 4.0,
            swa_epochs: 13,
            threshold: 0.3,
            bn_refresh_samples: 2048,
            width_divisor: 1,
            eval_chunk: 64,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return fail("epochs must be positive");
        }
        if self.batch_size < 2 || self.baseline_batch_size < 2 {
            return fail("batch sizes must be at least 2");
        }
        if self.warmup_epochs > self.epochs {
            return fail("warmup_epochs exceeds epochs");
        }
        if self.swa_epochs == 0 || self.swa_epochs > self.epochs {
            return fail("swa_epochs must be in 1..=epochs");
        }
        if self.em_iters == 0 {
            return fail("em_iters must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda_n) {
            return fail("lambda_n must be in [0, 1]");
        }
        if !(self.mixup_alpha > 0.0) {
            return fail("mixup_alpha must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must be in (0, 1)");
        }
        if self.eval_chunk == 0 || self.bn_refresh_samples == 0 {
            return fail("eval_chunk and bn_refresh_samples must be positive");
        }
        Ok(())
    }

    pub fn model(&self, n_labels: usize) -> Result<ModelConfig> {
        ModelConfig::narrowed(n_labels, self.width_divisor)
    }
}
