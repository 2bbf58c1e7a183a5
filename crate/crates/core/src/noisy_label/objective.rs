use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Real, Tensor3};

/// Loss terms of one mixed batch and the gradient on the head logits.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    /// Cross-entropy over rows whose first member came from the clean set.
    pub l_x: f64,
    /// Squared error over rows whose first member came from the noisy set.
    pub l_u: f64,
    pub dlogits: Tensor3<T>,
}

impl<T> Objective<T> {
    pub fn total(&self) -> f64 {
        self.l_x + self.l_u
    }
}

/// Mixed-batch objective on logits `(B, N, 1)`: mean sigmoid cross-entropy over
/// clean-origin rows plus mean squared error of sigmoid outputs over
/// noisy-origin rows. An empty group contributes zero.
pub fn objective<T: Real>(logits: &Tensor3<T>, targets: &[Vec<f64>], clean_origin: &[bool]) -> Result<Objective<T>> {
    let [b, n, f] = logits.shape();
    if f != 1 || targets.len() != b || clean_origin.len() != b || targets.iter().any(|t| t.len() != n) {
        return Err(Error::Shape(format!(
            "objective got logits {:?}, {} target rows, {} routing flags",
            logits.shape(),
            targets.len(),
            clean_origin.len()
        )));
    }
    let n_x = clean_origin.iter().filter(|&&c| c).count();
    let n_u = b - n_x;
    let (mut l_x, mut l_u) = (0.0, 0.0);
    let mut dlogits = Tensor3::zeros(b, n, 1);
    for i in 0..b {
        let z_row = logits.item(i);
        let d_row = dlogits.item_mut(i);
        for k in 0..n {
            let z = z_row[k].to_f64_lossy();
            let u = targets[i][k];
            let s = sigmoid(z);
            let d = if clean_origin[i] {
                let scale = (n_x * n) as f64;
                l_x += (softplus(z) - u * z) / scale;
                (s - u) / scale
            } else {
                let scale = (n_u * n) as f64;
                l_u += (s - u).powi(2) / scale;
                2.0 * (s - u) * s * (1.0 - s) / scale
            };
            d_row[k] = T::from_f64_lossy(d);
        }
    }
    Ok(Objective { l_x, l_u, dlogits })
}

/// Mean sigmoid cross-entropy against hard labels, with its logit gradient.
pub fn bce_with_logits<T: Real>(logits: &Tensor3<T>, labels: &[Vec<u8>]) -> Result<(f64, Tensor3<T>)> {
    let targets: Vec<Vec<f64>> = labels.iter().map(|r| r.iter().map(|&y| y as f64).collect()).collect();
    let all = vec![true; targets.len()];
    let o = objective(logits, &targets, &all)?;
    Ok((o.l_x, o.dlogits))
}
