use std::collections::HashMap;

use crate::error::{Error, Result};

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferId(usize);

/// A trainable leaf tensor and its gradient slot.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

/// Non-trainable state such as batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct Buffer<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

/// Every weight of one network, addressable by id or by unique name.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T> {
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    names: HashMap<String, Slot>,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Param(usize),
    Buffer(usize),
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            params: Vec::new(),
            buffers: Vec::new(),
            names: HashMap::new(),
        }
    }

    fn claim(&mut self, name: &str, slot: Slot) -> Result<()> {
        if self.names.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.names.insert(name.to_string(), slot);
        Ok(())
    }

    pub fn add_param(&mut self, name: &str, shape: &[usize], value: Vec<T>) -> Result<ParamId> {
        if value.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("{name}: {} values for {shape:?}", value.len())));
        }
        self.claim(name, Slot::Param(self.params.len()))?;
        let n = value.len();
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            grad: vec![T::zero(); n],
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn add_buffer(&mut self, name: &str, shape: &[usize], value: Vec<T>) -> Result<BufferId> {
        if value.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("{name}: {} values for {shape:?}", value.len())));
        }
        self.claim(name, Slot::Buffer(self.buffers.len()))?;
        self.buffers.push(Buffer {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
        });
        Ok(BufferId(self.buffers.len() - 1))
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    /// Value and gradient of one parameter, borrowed together.
    pub fn value_and_grad(&mut self, id: ParamId) -> (&[T], &mut [T]) {
        let p = &mut self.params[id.0];
        (&p.value, &mut p.grad)
    }

    pub fn buffer(&self, id: BufferId) -> &[T] {
        &self.buffers[id.0].value
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut [T] {
        &mut self.buffers[id.0].value
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Param<T>> {
        match self.names.get(name)? {
            Slot::Param(i) => Some(&self.params[*i]),
            Slot::Buffer(_) => None,
        }
    }

    pub fn param_by_name_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        match self.names.get(name)? {
            Slot::Param(i) => Some(&mut self.params[*i]),
            Slot::Buffer(_) => None,
        }
    }

    pub fn buffer_by_name_mut(&mut self, name: &str) -> Option<&mut Buffer<T>> {
        match self.names.get(name)? {
            Slot::Buffer(i) => Some(&mut self.buffers[*i]),
            Slot::Param(_) => None,
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// True when both stores hold the same names and shapes in the same order.
    pub fn same_layout(&self, other: &ParameterStore<T>) -> bool {
        self.params.len() == other.params.len()
            && self.buffers.len() == other.buffers.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
            && self
                .buffers
                .iter()
                .zip(&other.buffers)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// Copies all values and buffers from a store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParameterStore<T>) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::Shape("parameter layouts differ".into()));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value.copy_from_slice(&b.value);
        }
        for (a, b) in self.buffers.iter_mut().zip(&other.buffers) {
            a.value.copy_from_slice(&b.value);
        }
        Ok(())
    }
}
