use crate::error::{Error, Result};

use super::Real;

/// Dense `(batch, channel, frame)` tensor, row-major.
///
/// Feature matrices are stored with a single frame, `(batch, features, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    data: Vec<T>,
    shape: [usize; 3],
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(batch: usize, channels: usize, frames: usize) -> Self {
        Tensor3 {
            data: vec![T::zero(); batch * channels * frames],
            shape: [batch, channels, frames],
        }
    }

    pub fn from_vec(data: Vec<T>, shape: [usize; 3]) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} values cannot fill shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor3 { data, shape })
    }

    /// `(batch, features, 1)` tensor from row-major feature rows.
    pub fn from_rows(data: Vec<T>, batch: usize, features: usize) -> Result<Self> {
        Self::from_vec(data, [batch, features, 1])
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn frames(&self) -> usize {
        self.shape[2]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Slice for one batch element, `channels × frames` row-major.
    pub fn item(&self, b: usize) -> &[T] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.shape[1] * self.shape[2];
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn at(&self, b: usize, c: usize, t: usize) -> T {
        self.data[(b * self.shape[1] + c) * self.shape[2] + t]
    }

    pub fn set(&mut self, b: usize, c: usize, t: usize, v: T) {
        let i = (b * self.shape[1] + c) * self.shape[2] + t;
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor3 {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `idx` of the batch, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let n = self.shape[1] * self.shape[2];
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(self.item(i));
        }
        Tensor3 {
            data,
            shape: [idx.len(), self.shape[1], self.shape[2]],
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor3<U> {
        Tensor3 {
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
            shape: self.shape,
        }
    }

    pub(crate) fn expect_shape(&self, what: &str, channels: usize) -> Result<()> {
        if self.shape[1] != channels {
            return Err(Error::Shape(format!(
                "{what}: expected {channels} channels, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}
