use crate::error::{Error, Result};

use super::{BufferId, Mode, ParamId, ParameterStore, Real, Tensor3};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Batch normalization over the batch and frame axes, per channel.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    /// Batches folded into the running statistics under [`Mode::CollectStats`].
    collected: usize,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Tensor3<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(store: &mut ParameterStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            channels,
            gamma: store.add_param(&format!("{name}.gamma"), &[channels], vec![T::one(); channels])?,
            beta: store.add_param(&format!("{name}.beta"), &[channels], vec![T::zero(); channels])?,
            running_mean: store.add_buffer(
                &format!("{name}.running_mean"),
                &[channels],
                vec![T::zero(); channels],
            )?,
            running_var: store.add_buffer(
                &format!("{name}.running_var"),
                &[channels],
                vec![T::one(); channels],
            )?,
            collected: 0,
            cache: None,
        })
    }

    /// Clears running statistics before a [`Mode::CollectStats`] sweep.
    pub fn reset_running_stats(&mut self, store: &mut ParameterStore<T>) {
        store.buffer_mut(self.running_mean).fill(T::zero());
        store.buffer_mut(self.running_var).fill(T::one());
        self.collected = 0;
    }

    pub fn forward(&mut self, store: &mut ParameterStore<T>, mut x: Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        x.expect_shape("batch norm", self.channels)?;
        let [batch, channels, frames] = x.shape();
        let count = batch * frames;
        if count == 0 {
            return Err(Error::Shape("batch norm over an empty batch".into()));
        }
        let n = T::from_usize(count).unwrap();
        let eps = T::from_f64_lossy(BN_EPS);

        let (mean, var) = match mode {
            Mode::Eval => (
                store.buffer(self.running_mean).to_vec(),
                store.buffer(self.running_var).to_vec(),
            ),
            Mode::Train | Mode::CollectStats => {
                let mut mean = vec![T::zero(); channels];
                let mut var = vec![T::zero(); channels];
                for b in 0..batch {
                    let item = x.item(b);
                    for c in 0..channels {
                        mean[c] += item[c * frames..(c + 1) * frames].iter().copied().sum::<T>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for b in 0..batch {
                    let item = x.item(b);
                    for c in 0..channels {
                        var[c] += item[c * frames..(c + 1) * frames]
                            .iter()
                            .map(|&v| (v - mean[c]) * (v - mean[c]))
                            .sum::<T>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                self.update_running(store, &mean, &var, count, mode);
                (mean, var)
            }
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        for b in 0..batch {
            let item = x.item_mut(b);
            for c in 0..channels {
                for v in &mut item[c * frames..(c + 1) * frames] {
                    *v = (*v - mean[c]) * inv_std[c];
                }
            }
        }
        let gamma = store.value(self.gamma);
        let beta = store.value(self.beta);
        let mut y = x.clone();
        for b in 0..batch {
            let item = y.item_mut(b);
            for c in 0..channels {
                for v in &mut item[c * frames..(c + 1) * frames] {
                    *v = *v * gamma[c] + beta[c];
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some(BnCache { xhat: x, inv_std });
        }
        Ok(y)
    }

    fn update_running(&mut self, store: &mut ParameterStore<T>, mean: &[T], var: &[T], count: usize, mode: Mode) {
        let unbias = if count > 1 {
            T::from_usize(count).unwrap() / T::from_usize(count - 1).unwrap()
        } else {
            T::one()
        };
        let rate = match mode {
            Mode::CollectStats => {
                self.collected += 1;
                T::one() / T::from_usize(self.collected).unwrap()
            }
            _ => T::from_f64_lossy(BN_MOMENTUM),
        };
        for (r, &m) in store.buffer_mut(self.running_mean).iter_mut().zip(mean) {
            *r = *r + rate * (m - *r);
        }
        for (r, &v) in store.buffer_mut(self.running_var).iter_mut().zip(var) {
            *r = *r + rate * (v * unbias - *r);
        }
    }

    pub fn backward(&mut self, store: &mut ParameterStore<T>, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let BnCache { xhat, inv_std } = self
            .cache
            .take()
            .ok_or_else(|| Error::State("batch norm backward without a recorded forward".into()))?;
        if dy.shape() != xhat.shape() {
            return Err(Error::Shape(format!("batch norm gradient {:?} vs {:?}", dy.shape(), xhat.shape())));
        }
        let [batch, channels, frames] = xhat.shape();
        let n = T::from_usize(batch * frames).unwrap();
        let mut sum_dy = vec![T::zero(); channels];
        let mut sum_dy_xhat = vec![T::zero(); channels];
        for b in 0..batch {
            let g = dy.item(b);
            let xh = xhat.item(b);
            for c in 0..channels {
                for t in c * frames..(c + 1) * frames {
                    sum_dy[c] += g[t];
                    sum_dy_xhat[c] += g[t] * xh[t];
                }
            }
        }
        {
            let dgamma = store.value_and_grad(self.gamma).1;
            dgamma.iter_mut().zip(&sum_dy_xhat).for_each(|(d, &s)| *d += s);
        }
        {
            let dbeta = store.value_and_grad(self.beta).1;
            dbeta.iter_mut().zip(&sum_dy).for_each(|(d, &s)| *d += s);
        }
        let gamma = store.value(self.gamma);
        let mut dx = xhat;
        for b in 0..batch {
            let g = dy.item(b);
            let item = dx.item_mut(b);
            for c in 0..channels {
                let k = gamma[c] * inv_std[c] / n;
                for t in c * frames..(c + 1) * frames {
                    item[t] = k * (n * g[t] - sum_dy[c] - item[t] * sum_dy_xhat[c]);
                }
            }
        }
        Ok(dx)
    }
}
