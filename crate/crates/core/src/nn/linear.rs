use rand::Rng;

use crate::error::{Error, Result};

use super::real::{gemm, MatRef};
use super::{init, ParamId, ParameterStore, Real, Tensor3};

/// Fully connected layer on `(batch, features, 1)` tensors.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: ParamId,
    pub bias: ParamId,
    input: Option<Tensor3<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add_param(
            &format!("{name}.weight"),
            &[out_features, in_features],
            init::fan_in_uniform(rng, in_features * out_features, in_features),
        )?;
        let bias = store.add_param(&format!("{name}.bias"), &[out_features], vec![T::zero(); out_features])?;
        Ok(Linear {
            in_features,
            out_features,
            weight,
            bias,
            input: None,
        })
    }

    pub fn forward(&mut self, store: &ParameterStore<T>, x: Tensor3<T>, record: bool) -> Result<Tensor3<T>> {
        if x.channels() != self.in_features || x.frames() != 1 {
            return Err(Error::Shape(format!(
                "linear expects (B, {}, 1), got {:?}",
                self.in_features,
                x.shape()
            )));
        }
        let batch = x.batch();
        let mut y = Tensor3::zeros(batch, self.out_features, 1);
        let bias = store.value(self.bias);
        for row in y.data_mut().chunks_mut(self.out_features) {
            row.copy_from_slice(bias);
        }
        let w = MatRef::rows(store.value(self.weight), self.out_features, self.in_features);
        gemm(
            T::one(),
            MatRef::rows(x.data(), batch, self.in_features),
            w.t(),
            T::one(),
            y.data_mut(),
            self.out_features,
        );
        if record {
            self.input = Some(x);
        }
        Ok(y)
    }

    pub fn backward(&mut self, store: &mut ParameterStore<T>, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::State("linear backward without a recorded forward".into()))?;
        let batch = x.batch();
        if dy.shape() != [batch, self.out_features, 1] {
            return Err(Error::Shape(format!("linear gradient {:?}", dy.shape())));
        }
        let g = MatRef::rows(dy.data(), batch, self.out_features);
        {
            let dw = store.value_and_grad(self.weight).1;
            gemm(
                T::one(),
                g.t(),
                MatRef::rows(x.data(), batch, self.in_features),
                T::one(),
                dw,
                self.in_features,
            );
        }
        {
            let db = store.value_and_grad(self.bias).1;
            for row in dy.data().chunks(self.out_features) {
                db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
            }
        }
        let mut dx = Tensor3::zeros(batch, self.in_features, 1);
        let w = MatRef::rows(store.value(self.weight), self.out_features, self.in_features);
        gemm(T::one(), g, w, T::zero(), dx.data_mut(), self.in_features);
        Ok(dx)
    }
}
