/// `t·a + (1−t)·b`, exact at `t ∈ {0, 1}` and never outside `[min(a,b), max(a,b)]`.
pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        return a;
    }
    if t == 0.0 {
        return b;
    }
    (b + t * (a - b)).clamp(a.min(b), a.max(b))
}

/// Soft targets of a clean sample: the given labels pulled toward the
/// network's own prediction by `1 − lambda_gmm`.
pub fn refine_clean(labels: &[u8], pred: &[f64], lambda_gmm: f64) -> Vec<f64> {
    debug_assert_eq!(labels.len(), pred.len());
    labels
        .iter()
        .zip(pred)
        .map(|(&y, &p)| lerp(y as f64, p, lambda_gmm))
        .collect()
}

/// Soft targets of a noisy sample: the averaged predictions of both networks
/// blended with the given labels, `lambda_n` weighting the predictions.
pub fn coguess_noisy(pred_1: &[f64], pred_2: &[f64], labels: &[u8], lambda_n: f64) -> Vec<f64> {
    debug_assert_eq!(pred_1.len(), labels.len());
    debug_assert_eq!(pred_2.len(), labels.len());
    pred_1
        .iter()
        .zip(pred_2)
        .zip(labels)
        .map(|((&p1, &p2), &y)| lerp(0.5 * (p1 + p2), y as f64, lambda_n))
        .collect()
}
