use crate::error::{Error, Result};
use crate::model::{probabilities, Network};
use crate::nn::Real;
use crate::signal_prep::PreparedSet;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of one probability against a (possibly soft) target.
pub fn bce(prob: f64, target: f64) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Label-averaged cross-entropy of one sample.
pub fn sample_bce(probs: &[f64], labels: &[u8]) -> f64 {
    debug_assert_eq!(probs.len(), labels.len());
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce(p, y as f64))
        .sum::<f64>()
        / probs.len() as f64
}

/// Label-averaged cross-entropy of every sample in `set`, network in inference mode.
pub fn per_sample_loss<T: Real>(net: &mut Network<T>, set: &PreparedSet, chunk: usize) -> Result<Vec<f64>> {
    if set.n_labels != net.n_labels() {
        return Err(Error::Shape(format!(
            "dataset has {} labels, network {}",
            set.n_labels,
            net.n_labels()
        )));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut losses = Vec::with_capacity(set.len());
    for part in idx.chunks(chunk.max(1)) {
        let (x, w) = set.eval_batch(part);
        let probs = probabilities(net, &x.cast(), &w.cast(), part.len())?;
        losses.extend(
            probs
                .iter()
                .zip(part)
                .map(|(p, &i)| sample_bce(p, &set.samples[i].labels)),
        );
    }
    Ok(losses)
}
