use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Mode, Real, Tensor3};

use super::Network;

/// Decision threshold applied to per-label probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.3;

/// Per-label probabilities of one sample and the thresholded decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub decisions: Vec<bool>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f64>, threshold: f64) -> Self {
        let decisions = probabilities.iter().map(|&p| p >= threshold).collect();
        Prediction {
            probabilities,
            decisions,
        }
    }

    pub fn from_logits(logits: &[f64], threshold: f64) -> Self {
        Self::from_probabilities(logits.iter().map(|&z| sigmoid(z)).collect(), threshold)
    }
}

/// Sigmoid probabilities `(B, N)` of a network in inference mode, computed in chunks.
pub fn probabilities<T: Real>(
    net: &mut Network<T>,
    x: &Tensor3<T>,
    wide: &Tensor3<T>,
    chunk: usize,
) -> Result<Vec<Vec<f64>>> {
    if x.batch() != wide.batch() {
        return Err(Error::Shape("signal and wide-feature batches differ".into()));
    }
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(x.batch());
    let ids: Vec<usize> = (0..x.batch()).collect();
    for part in ids.chunks(chunk) {
        let logits = net.forward(&x.select(part), &wide.select(part), Mode::Eval)?;
        for row in logits.data().chunks(net.n_labels()) {
            out.push(row.iter().map(|&z| sigmoid(z.to_f64_lossy())).collect());
        }
    }
    Ok(out)
}

/// Thresholded predictions for every sample of the batch.
pub fn predict<T: Real>(
    net: &mut Network<T>,
    x: &Tensor3<T>,
    wide: &Tensor3<T>,
    threshold: f64,
) -> Result<Vec<Prediction>> {
    Ok(probabilities(net, x, wide, 64)?
        .into_iter()
        .map(|p| Prediction::from_probabilities(p, threshold))
        .collect())
}
