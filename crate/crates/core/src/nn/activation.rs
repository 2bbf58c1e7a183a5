use crate::error::{Error, Result};

use super::{Real, Tensor3};

/// `ln(1 + eˣ)` without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Mish activation, `x · tanh(softplus(x))`.
pub fn mish<T: Real>(x: T) -> T {
    x * softplus(x).tanh()
}

pub fn mish_grad<T: Real>(x: T) -> T {
    let t = softplus(x).tanh();
    t + x * (T::one() - t * t) * sigmoid(x)
}

/// Elementwise Mish that remembers its input for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Mish<T> {
    input: Option<Tensor3<T>>,
}

impl<T: Real> Mish<T> {
    pub fn new() -> Self {
        Mish { input: None }
    }

    pub fn forward(&mut self, x: Tensor3<T>, record: bool) -> Tensor3<T> {
        let y = x.map(mish);
        if record {
            self.input = Some(x);
        }
        y
    }

    pub fn backward(&mut self, mut dy: Tensor3<T>) -> Result<Tensor3<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::State("mish backward without a recorded forward".into()))?;
        for (g, &v) in dy.data_mut().iter_mut().zip(x.data()) {
            *g *= mish_grad(v);
        }
        Ok(dy)
    }
}
