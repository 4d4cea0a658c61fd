//! Named parameter tensors with paired gradient buffers.
//!
//! Parameters live in a sorted map, so iteration order (and therefore
//! checkpoint layout and optimizer update order) is stable across runs.
//! Each slot tracks whether its gradient was written since the last
//! `zero_grads`, which catches wiring bugs where a backward pass forgets
//! a tensor.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::scalar::Scalar;

#[derive(Clone, Debug)]
struct Slot<F> {
    value: Matrix<F>,
    grad: Matrix<F>,
    grad_set: bool,
}

/// Collection of named parameters and their gradients.
#[derive(Clone, Debug)]
pub struct ParamStore<F> {
    slots: BTreeMap<String, Slot<F>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self { slots: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: Matrix<F>) -> Result<()> {
        if self.slots.contains_key(name) {
            return Err(Error::DuplicateParam { name: name.to_string() });
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.slots.insert(name.to_string(), Slot { value, grad, grad_set: false });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    /// Parameter names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<&Matrix<F>> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| Error::UnknownParam { name: name.to_string() })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Matrix<F>> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.value)
            .ok_or_else(|| Error::UnknownParam { name: name.to_string() })
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix<F>> {
        self.slots
            .get(name)
            .map(|s| &s.grad)
            .ok_or_else(|| Error::UnknownParam { name: name.to_string() })
    }

    /// Adds `g` into the gradient buffer for `name` and marks it written.
    pub fn accumulate_grad(&mut self, name: &str, g: &Matrix<F>) -> Result<()> {
        let slot = self
            .slots
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam { name: name.to_string() })?;
        if g.rows() != slot.grad.rows() || g.cols() != slot.grad.cols() {
            return Err(Error::Shape {
                op: "accumulate_grad",
                expected: (slot.grad.rows(), slot.grad.cols()),
                got: (g.rows(), g.cols()),
            });
        }
        slot.grad.add_scaled_assign(g, F::one())?;
        slot.grad_set = true;
        Ok(())
    }

    /// Clears all gradient buffers and their written flags.
    pub fn zero_grads(&mut self) {
        for slot in self.slots.values_mut() {
            slot.grad.fill(F::zero());
            slot.grad_set = false;
        }
    }

    /// Errors with the first parameter whose gradient was never written.
    pub fn require_all_grads(&self) -> Result<()> {
        for (name, slot) in &self.slots {
            if !slot.grad_set {
                return Err(Error::MissingGradient { name: name.clone() });
            }
        }
        Ok(())
    }

    /// Sorted iteration over `(name, value)` pairs; checkpoint layout order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<F>)> {
        self.slots.iter().map(|(n, s)| (n.as_str(), &s.value))
    }

    /// Sorted iteration over `(name, value, grad)`, mutable value.
    pub(crate) fn iter_value_grad_mut(
        &mut self,
    ) -> impl Iterator<Item = (&str, &mut Matrix<F>, &Matrix<F>, bool)> {
        self.slots
            .iter_mut()
            .map(|(n, s)| (n.as_str(), &mut s.value, &s.grad, s.grad_set))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.rows() * s.value.cols()).sum()
    }
}
