//! Dense-tensor math with reverse-mode automatic differentiation.
//!
//! Everything downstream (encoder, transformers, masking, the SI-SNR loss)
//! is composed from the operations recorded on a [`Tape`], so one backward
//! traversal yields exact gradients for the whole separation pipeline.
//!
//! Design notes:
//! - No implicit broadcasting. Shapes must match exactly; the few
//!   "vector + scalar" or "matrix + row bias" cases are explicit ops.
//! - Tensors are immutable once created. A `Tape` owns its nodes and is
//!   single-threaded; independent tapes may run on independent threads.
//! - Leaf gradients accumulate across `backward` calls until `zero_grad`.

mod fused;
mod gradcheck;
mod kernels;
mod ops;

pub use gradcheck::{grad_check, GradCheckOptions};
pub use kernels::{matmul_nn, matmul_nt, matmul_tn};
pub use ops::Op;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use crate::error::{Error, Result};

/// Floating-point element type for the whole model. f64 is used by every
/// test and gradient check; f32 is offered for training speed.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}
impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Shorthand for converting literals into the active precision.
#[inline]
pub fn fl<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite literal")
}

/// An owned tensor value: flat data plus shape, with an optional gradient
/// slot that `Tape::backward` results are accumulated into (for parameters)
/// or that `grad_check` perturbs (for test inputs).
#[derive(Clone, Debug)]
pub struct Tensor<F: Scalar> {
    pub data: Vec<F>,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(data: Vec<F>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::Contract(format!(
                "tensor shape {:?} does not describe {} elements",
                shape,
                data.len()
            )));
        }
        Ok(Tensor {
            data,
            shape: shape.to_vec(),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            data: vec![F::zero(); numel],
            shape: shape.to_vec(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Tensor::new(data.iter().map(|&x| fl(x)), shape).map_err(|e| e)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Adds `scale * g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[F], scale: F) {
        let grad = self
            .grad
            .get_or_insert_with(|| vec![F::zero(); self.data.len()]);
        for (dst, &src) in grad.iter_mut().zip(g) {
            *dst += src * scale;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

impl<F: Scalar> Tensor<F> {
    fn new_from_iter(data: impl IntoIterator<Item = F>, shape: &[usize]) -> Result<Self> {
        Tensor::new(data.into_iter().collect(), shape)
    }
}

// `Tensor::new` is more convenient when callers can pass iterators too.
#[allow(clippy::needless_pass_by_value)]
impl<F: Scalar> Tensor<F> {
    pub fn from_iter(data: impl IntoIterator<Item = F>, shape: &[usize]) -> Result<Self> {
        Self::new_from_iter(data, shape)
    }
}

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

pub(crate) struct Node<F: Scalar> {
    pub data: Vec<F>,
    pub shape: Vec<usize>,
    pub op: Op<F>,
    /// True for leaves that were registered with `requires_grad`.
    pub requires_grad: bool,
    /// True if a `requires_grad` leaf is reachable below this node.
    pub needs_grad: bool,
    /// Persistent gradient for `requires_grad` leaves; accumulates across
    /// backward calls until `zero_grad`.
    pub grad: Option<Vec<F>>,
}

/// Ordered record of executed differentiable operations.
///
/// Nodes are appended in execution order, so each op appears after all ops
/// producing its inputs and one reverse sweep suffices for gradients.
pub struct Tape<F: Scalar> {
    pub(crate) nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Gradients are only tracked through leaves
    /// created with `requires_grad = true`.
    pub fn leaf(&mut self, data: Vec<F>, shape: &[usize], requires_grad: bool) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::Contract(format!(
                "leaf shape {:?} does not describe {} elements",
                shape,
                data.len()
            )));
        }
        Ok(self.push(data, shape.to_vec(), Op::Leaf, requires_grad))
    }

    pub fn leaf_tensor(&mut self, t: &Tensor<F>) -> Result<TensorId> {
        self.leaf(t.data.clone(), &t.shape, t.requires_grad)
    }

    pub fn constant(&mut self, data: Vec<F>, shape: &[usize]) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    pub fn scalar(&mut self, v: F) -> TensorId {
        self.push(vec![v], vec![1], Op::Leaf, false)
    }

    pub(crate) fn push(
        &mut self,
        data: Vec<F>,
        shape: Vec<usize>,
        op: Op<F>,
        requires_grad: bool,
    ) -> TensorId {
        let needs_grad = requires_grad || op.inputs().iter().any(|&i| self.nodes[i].needs_grad);
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            data,
            shape,
            op,
            requires_grad,
            needs_grad,
            grad: None,
        });
        id
    }

    pub fn data(&self, id: TensorId) -> &[F] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a scalar (single-element) tensor.
    pub fn value(&self, id: TensorId) -> F {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    /// Gradient of a `requires_grad` leaf, if `backward` has run.
    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Reverse sweep from a scalar loss; accumulates dLoss/dLeaf into every
    /// reachable `requires_grad` leaf. Repeated calls accumulate.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut adjoints: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adjoints[i].take() else {
                continue;
            };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                if self.nodes[i].requires_grad {
                    let node = &mut self.nodes[i];
                    match node.grad.as_mut() {
                        Some(acc) => {
                            for (dst, src) in acc.iter_mut().zip(&g) {
                                *dst += *src;
                            }
                        }
                        None => node.grad = Some(g),
                    }
                }
            } else {
                self.backprop(i, &g, &mut adjoints);
            }
        }
        Ok(())
    }

    /// Adds `contrib` into the adjoint buffer of `input` (skipping inputs
    /// that cannot reach a tracked leaf).
    pub(crate) fn accumulate(
        &self,
        adjoints: &mut [Option<Vec<F>>],
        input: usize,
        contrib: Vec<F>,
    ) {
        if !self.nodes[input].needs_grad {
            return;
        }
        match &mut adjoints[input] {
            Some(acc) => {
                for (dst, src) in acc.iter_mut().zip(&contrib) {
                    *dst += *src;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    pub(crate) fn needs(&self, input: usize) -> bool {
        self.nodes[input].needs_grad
    }
}
