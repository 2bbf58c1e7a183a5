use rand::Rng;

use crate::error::{Error, Result};

use super::activation::sigmoid;
use super::{Linear, Mish, ParameterStore, Real, Tensor3};

/// Channel attention: frame-mean → FC(C→C/4) → Mish → FC(C/4→C) → sigmoid gate.
#[derive(Debug, Clone)]
pub struct SqueezeExcite<T> {
    pub channels: usize,
    pub reduce: Linear<T>,
    pub expand: Linear<T>,
    act: Mish<T>,
    cache: Option<(Tensor3<T>, Tensor3<T>)>,
}

impl<T: Real> SqueezeExcite<T> {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if channels == 0 || !channels.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "squeeze-excite needs channels divisible by 4, got {channels}"
            )));
        }
        Ok(SqueezeExcite {
            channels,
            reduce: Linear::new(store, &format!("{name}.reduce"), channels, channels / 4, rng)?,
            expand: Linear::new(store, &format!("{name}.expand"), channels / 4, channels, rng)?,
            act: Mish::new(),
            cache: None,
        })
    }

    pub fn forward(&mut self, store: &ParameterStore<T>, x: Tensor3<T>, record: bool) -> Result<Tensor3<T>> {
        x.expect_shape("squeeze-excite", self.channels)?;
        let [batch, channels, frames] = x.shape();
        let scale = T::one() / T::from_usize(frames).unwrap();
        let pooled: Vec<T> = x
            .data()
            .chunks(frames)
            .map(|row| row.iter().copied().sum::<T>() * scale)
            .collect();
        let s = Tensor3::from_rows(pooled, batch, channels)?;
        let z = self.reduce.forward(store, s, record)?;
        let a = self.act.forward(z, record);
        let gate = self.expand.forward(store, a, record)?.map(sigmoid);
        let mut y = x.clone();
        for (row, &g) in y.data_mut().chunks_mut(frames).zip(gate.data()) {
            row.iter_mut().for_each(|v| *v *= g);
        }
        if record {
            self.cache = Some((x, gate));
        }
        Ok(y)
    }

    pub fn backward(&mut self, store: &mut ParameterStore<T>, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let (x, gate) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("squeeze-excite backward without a recorded forward".into()))?;
        let [batch, channels, frames] = x.shape();
        // d loss / d pre-sigmoid gate
        let dz: Vec<T> = dy
            .data()
            .chunks(frames)
            .zip(x.data().chunks(frames))
            .zip(gate.data())
            .map(|((g, xv), &s)| {
                let dg: T = g.iter().zip(xv).map(|(&a, &b)| a * b).sum();
                dg * s * (T::one() - s)
            })
            .collect();
        let da = self.expand.backward(store, &Tensor3::from_rows(dz, batch, channels)?)?;
        let dz1 = self.act.backward(da)?;
        let ds = self.reduce.backward(store, &dz1)?;
        let scale = T::one() / T::from_usize(frames).unwrap();
        let mut dx = dy.clone();
        for ((row, &g), &d) in dx.data_mut().chunks_mut(frames).zip(gate.data()).zip(ds.data()) {
            let through_mean = d * scale;
            row.iter_mut().for_each(|v| *v = *v * g + through_mean);
        }
        Ok(dx)
    }
}
