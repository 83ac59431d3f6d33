//! Dense 2-D tensors with tape-based reverse-mode differentiation.
//!
//! Values are `f64` matrices (`rows × cols`, row-major); vectors are `1 × n`
//! or `n × 1` and scalars are `1 × 1`. A [`Tape`] records every primitive
//! applied during one forward pass; [`Tape::backward`] walks it once in
//! reverse and accumulates gradients into the [`ParamStore`].
//!
//! Broadcasting is limited to a right operand of shape `1 × c` (row vector),
//! `r × 1` (column vector) or `1 × 1` (scalar); anything else needs an
//! explicit [`Tape::expand`].

mod check;
mod tape;

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;

pub use check::{grad_check, GradCheckReport, DEFAULT_EPS};
pub use tape::{Grads, Tape, Var};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Shared row-index vector used by gather and segment primitives.
pub type Index = Arc<[usize]>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

/// A named trainable matrix with its gradient and optimizer slots.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub slots: Vec<Matrix>,
}

impl Parameter {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Owner of a model's parameters and non-trainable buffers (batch-norm
/// running statistics).
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, ParamId>,
    buffers: Vec<(String, Matrix)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Duplicate {
                kind: "parameter",
                name,
            });
        }
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        let grad = Matrix::zeros(value.raw_dim());
        self.params.push(Parameter {
            name,
            value,
            grad,
            slots: Vec::new(),
        });
        Ok(id)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Matrix) -> BufferId {
        self.buffers.push((name.into(), value));
        BufferId(self.buffers.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    /// Overwrites a parameter's value; shapes must agree.
    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::shape("set", format!("no parameter `{name}`")))?;
        let p = &mut self.params[id.0];
        if p.value.dim() != value.dim() {
            return Err(Error::shape(
                "set",
                format!("`{name}` is {:?}, got {:?}", p.value.dim(), value.dim()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn buffer(&self, id: BufferId) -> &Matrix {
        &self.buffers[id.0].1
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Matrix {
        &mut self.buffers[id.0].1
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Matrix) {
        self.params[id.0].grad += g;
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}
