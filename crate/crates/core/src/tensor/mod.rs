//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable N-dimensional array (NCHW for 4-D image
//! tensors). Operations build a dynamic graph: each result holds `Arc`
//! handles to its inputs plus whatever the backward pass needs, so the tape
//! is exactly the set of live result tensors and is dropped when they are.
//! Gradients are accumulated into leaf tensors that were created with
//! `requires_grad = true`; everything else stays gradient-free.
//!
//! Results that do not depend on any gradient-tracking leaf carry no graph
//! at all, which keeps pure inference free of bookkeeping.

mod autograd;
mod layers;
mod ops;
mod optim;

pub use autograd::backward;
pub use layers::ConvWn;
pub use ops::{
    add, conv2d, mae_loss, max_pool2, mse_loss, mul, nearest_upsample2, offset_channels,
    pixel_shuffle, pixel_unshuffle, relu, sum, weight_norm_resolve,
};
pub use optim::AdamState;

pub(crate) use ops::Op;

use std::sync::{Arc, Mutex};

use crate::error::{CoreError, Result};

pub struct Tensor {
    inner: Arc<TensorInner>,
}

pub(crate) struct TensorInner {
    shape: Vec<usize>,
    data: Vec<f32>,
    /// True when gradients flow into (leaf) or through (interior) this tensor.
    requires_grad: bool,
    op: Op,
    grad: Mutex<Option<Vec<f32>>>,
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.inner.shape, self.inner.requires_grad
        )
    }
}

impl Tensor {
    fn build(data: Vec<f32>, shape: Vec<usize>, requires_grad: bool, op: Op) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::shape(
                "tensor",
                format!("shape {:?} implies {} values, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor {
            inner: Arc::new(TensorInner {
                shape,
                data,
                requires_grad,
                op,
                grad: Mutex::new(None),
            }),
        })
    }

    /// Constant leaf tensor (no gradient). Rejects non-finite values.
    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                op: "tensor",
                detail: format!("input value at flat index {bad} is {}", data[bad]),
            });
        }
        Tensor::build(data, shape.to_vec(), false, Op::Leaf)
    }

    /// Gradient-tracking leaf tensor, the payload of a [`Parameter`].
    pub fn leaf_with_grad(data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                op: "tensor",
                detail: format!("input value at flat index {bad} is {}", data[bad]),
            });
        }
        Tensor::build(data, shape.to_vec(), true, Op::Leaf)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::build(vec![0.0; n], shape.to_vec(), false, Op::Leaf).expect("consistent shape")
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        let n = shape.iter().product();
        Tensor::build(vec![value; n], shape.to_vec(), false, Op::Leaf).expect("consistent shape")
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor::build(vec![value], vec![1], false, Op::Leaf).expect("consistent shape")
    }

    /// Result tensor produced by an op. Tracks gradients iff any parent does;
    /// untracked results drop the op so no graph is retained.
    pub(crate) fn from_op(data: Vec<f32>, shape: Vec<usize>, op: Op) -> Tensor {
        let tracked = op.parents().iter().any(|p| p.inner.requires_grad);
        let op = if tracked { op } else { Op::Leaf };
        Tensor::build(data, shape, tracked, op).expect("op produced consistent shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.len() != 1 {
            return Err(CoreError::shape(
                "item",
                format!("expected a scalar, got shape {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.lock().expect("grad lock").clone()
    }

    /// Remove and return the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.lock().expect("grad lock").take()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock") = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[f32]) {
        debug_assert_eq!(g.len(), self.len());
        let mut slot = self.inner.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(acc) => {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn op(&self) -> &Op {
        &self.inner.op
    }

    /// Stable identity for graph traversal.
    pub(crate) fn node_id(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    /// A gradient-free leaf holding a copy of this tensor's values.
    pub fn detach(&self) -> Tensor {
        Tensor::build(self.inner.data.clone(), self.inner.shape.clone(), false, Op::Leaf)
            .expect("consistent shape")
    }
}

/// A named trainable tensor. Frozen parameters track no gradients and are
/// skipped by the optimizer.
pub struct Parameter {
    name: String,
    value: Tensor,
    frozen: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, data: Vec<f32>, shape: &[usize]) -> Result<Parameter> {
        Ok(Parameter {
            name: name.into(),
            value: Tensor::leaf_with_grad(data, shape)?,
            frozen: false,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Freeze or unfreeze. The payload tensor is rebuilt so that a frozen
    /// parameter stops participating in the gradient graph entirely.
    pub fn set_frozen(&mut self, frozen: bool) {
        if self.frozen == frozen {
            return;
        }
        let data = self.value.data().to_vec();
        let shape = self.value.shape().to_vec();
        self.value = if frozen {
            Tensor::from_vec(data, &shape).expect("finite parameter data")
        } else {
            Tensor::leaf_with_grad(data, &shape).expect("finite parameter data")
        };
        self.frozen = frozen;
    }

    /// Replace the payload after an optimizer step.
    pub(crate) fn replace_value(&mut self, data: Vec<f32>) -> Result<()> {
        let shape = self.value.shape().to_vec();
        self.value = if self.frozen {
            Tensor::from_vec(data, &shape)?
        } else {
            Tensor::leaf_with_grad(data, &shape)?
        };
        Ok(())
    }

    /// Overwrite the payload with externally loaded values (checkpoint
    /// restore). Shape must match.
    pub fn load_data(&mut self, data: Vec<f32>) -> Result<()> {
        if data.len() != self.value.len() {
            return Err(CoreError::shape(
                "parameter load",
                format!(
                    "'{}' expects {} values, got {}",
                    self.name,
                    self.value.len(),
                    data.len()
                ),
            ));
        }
        self.replace_value(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match() {
        assert!(Tensor::from_vec(vec![1.0, 2.0], &[3]).is_err());
        assert!(Tensor::from_vec(vec![1.0, 2.0, 3.0], &[3]).is_ok());
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(Tensor::from_vec(vec![1.0, f32::NAN], &[2]).is_err());
        assert!(Tensor::from_vec(vec![f32::INFINITY], &[1]).is_err());
    }

    #[test]
    fn grad_accumulates_across_deposits() {
        let t = Tensor::leaf_with_grad(vec![0.0; 3], &[3]).unwrap();
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), vec![2.0, 3.0, 4.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn frozen_parameter_stops_tracking() {
        let mut p = Parameter::new("w", vec![1.0, 2.0], &[2]).unwrap();
        assert!(p.value().requires_grad());
        p.set_frozen(true);
        assert!(!p.value().requires_grad());
        assert_eq!(p.value().data(), &[1.0, 2.0]);
        p.set_frozen(false);
        assert!(p.value().requires_grad());
    }
}
