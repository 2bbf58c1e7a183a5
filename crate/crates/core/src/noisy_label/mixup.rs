use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor3};

use super::refine::lerp;

/// Draws a mixing coefficient from `Beta(alpha, alpha)` folded onto `[0.5, 1]`.
pub fn sample_lambda_mix<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("mixup alpha {alpha}: {e}")))?;
    let l: f64 = beta.sample(rng);
    Ok(l.max(1.0 - l))
}

fn mix_value<T: Real>(a: T, b: T, lambda: f64) -> T {
    if lambda == 1.0 {
        a
    } else if lambda == 0.0 {
        b
    } else {
        let l = T::from_f64_lossy(lambda);
        l * a + (T::one() - l) * b
    }
}

/// Interpolates hidden vectors and their soft targets with weight `lambda_mix`
/// on the first member. Returns exact copies of one side at `lambda_mix ∈ {0, 1}`.
pub fn manifold_mixup<T: Real>(
    h_cl: &[T],
    h_nl: &[T],
    u_cl: &[f64],
    u_nl: &[f64],
    lambda_mix: f64,
) -> (Vec<T>, Vec<f64>) {
    debug_assert_eq!(h_cl.len(), h_nl.len());
    debug_assert_eq!(u_cl.len(), u_nl.len());
    let h = h_cl.iter().zip(h_nl).map(|(&a, &b)| mix_value(a, b, lambda_mix)).collect();
    let u = u_cl.iter().zip(u_nl).map(|(&a, &b)| lerp(a, b, lambda_mix)).collect();
    (h, u)
}

/// Pairing of every batch row with a partner row and the shared coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct MixPlan {
    pub lambda: f64,
    pub partner: Vec<usize>,
}

impl MixPlan {
    /// Partners are a uniformly random permutation of the batch.
    pub fn random<R: Rng + ?Sized>(batch: usize, alpha: f64, rng: &mut R) -> Result<Self> {
        let lambda = sample_lambda_mix(alpha, rng)?;
        let mut partner: Vec<usize> = (0..batch).collect();
        partner.shuffle(rng);
        Ok(MixPlan { lambda, partner })
    }

    /// Mixed hidden vectors `(B, H, 1)` and mixed targets `B × N`.
    pub fn apply<T: Real>(&self, h: &Tensor3<T>, targets: &[Vec<f64>]) -> Result<(Tensor3<T>, Vec<Vec<f64>>)> {
        let b = h.batch();
        if self.partner.len() != b || targets.len() != b {
            return Err(Error::Shape(format!(
                "mix plan for {} rows applied to {} hidden rows and {} targets",
                self.partner.len(),
                b,
                targets.len()
            )));
        }
        let width = h.channels() * h.frames();
        let mut data = Vec::with_capacity(b * width);
        let mut mixed = Vec::with_capacity(b);
        for (i, &j) in self.partner.iter().enumerate() {
            let (hm, um) = manifold_mixup(h.item(i), h.item(j), &targets[i], &targets[j], self.lambda);
            data.extend(hm);
            mixed.push(um);
        }
        Ok((Tensor3::from_vec(data, h.shape())?, mixed))
    }

    /// Gradient on the unmixed hidden vectors from the gradient on the mixed ones.
    pub fn backward<T: Real>(&self, dmix: &Tensor3<T>) -> Tensor3<T> {
        let l = T::from_f64_lossy(self.lambda);
        let r = T::one() - l;
        let mut dh = Tensor3::zeros(dmix.batch(), dmix.channels(), dmix.frames());
        for (i, &j) in self.partner.iter().enumerate() {
            for (d, &g) in dh.item_mut(i).iter_mut().zip(dmix.item(i)) {
                *d += l * g;
            }
            for (d, &g) in dh.item_mut(j).iter_mut().zip(dmix.item(i)) {
                *d += r * g;
            }
        }
        dh
    }
}
