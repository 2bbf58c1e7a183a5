use crate::error::{Error, Result};

use super::{Real, Tensor3};

/// Per-channel maximum over frames, `(B, C, W) → (B, C, 1)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalMaxPool {
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    frames: usize,
    argmax: Vec<usize>,
}

pub fn global_max_pool<T: Real>(x: &Tensor3<T>) -> Result<(Tensor3<T>, Vec<usize>)> {
    let [batch, channels, frames] = x.shape();
    if frames == 0 {
        return Err(Error::Shape("max pool over zero frames".into()));
    }
    let mut y = Tensor3::zeros(batch, channels, 1);
    let mut argmax = Vec::with_capacity(batch * channels);
    for (row, out) in x.data().chunks(frames).zip(y.data_mut()) {
        let mut best = 0;
        for (t, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = t;
            }
        }
        *out = row[best];
        argmax.push(best);
    }
    Ok((y, argmax))
}

impl GlobalMaxPool {
    pub fn new() -> Self {
        GlobalMaxPool { cache: None }
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor3<T>, record: bool) -> Result<Tensor3<T>> {
        let (y, argmax) = global_max_pool(x)?;
        if record {
            self.cache = Some(PoolCache {
                frames: x.frames(),
                argmax,
            });
        }
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let PoolCache { frames, argmax } = self
            .cache
            .take()
            .ok_or_else(|| Error::State("max pool backward without a recorded forward".into()))?;
        if dy.data().len() != argmax.len() {
            return Err(Error::Shape("max pool gradient length".into()));
        }
        let mut dx = Tensor3::zeros(dy.batch(), dy.channels(), frames);
        for (i, (&g, &t)) in dy.data().iter().zip(&argmax).enumerate() {
            dx.data_mut()[i * frames + t] = g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_spike_inputs() {
        let x = Tensor3::from_vec(vec![0.25f64; 2 * 3 * 5], [2, 3, 5]).unwrap();
        assert!(global_max_pool(&x).unwrap().0.data().iter().all(|&v| v == 0.25));
        let mut s = Tensor3::<f64>::zeros(1, 1, 9);
        s.set(0, 0, 6, 3.0);
        assert_eq!(global_max_pool(&s).unwrap().0.data(), &[3.0]);
    }

    #[test]
    fn gradient_lands_only_on_the_argmax_frame() {
        let x = Tensor3::<f64>::from_vec(vec![0.1, 0.7, -0.3, 0.2], [1, 1, 4]).unwrap();
        let mut pool = GlobalMaxPool::new();
        pool.forward(&x, true).unwrap();
        let dx = pool.backward(&Tensor3::from_vec(vec![1.0], [1, 1, 1]).unwrap()).unwrap();
        // finite differences: only the max frame moves the output
        for t in 0..4 {
            let mut xp = x.clone();
            xp.set(0, 0, t, x.at(0, 0, t) + 1e-6);
            let fd = (global_max_pool(&xp).unwrap().0.data()[0] - 0.7) / 1e-6;
            assert!((fd - dx.at(0, 0, t)).abs() < 1e-6);
        }
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 0.0]);
    }
}
