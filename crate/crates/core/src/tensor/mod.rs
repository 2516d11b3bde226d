//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] owns every tensor created through it. Operations append nodes
//! that cache their forward output together with the backward rule needed to
//! propagate gradients; [`Graph::backward`] walks the recorded graph once in
//! reverse topological order and accumulates the total derivative into every
//! tensor that requires gradients.
//!
//! Graphs are cheap, single-threaded values: build one per image (or per
//! optimization step), run it, drop it. Distinct graphs share nothing and may
//! live on distinct threads.

pub mod array;
mod ops;

pub use array::{argmax, Array};
pub(crate) use ops::OpKind;

use thiserror::Error;

use crate::scalar::Scalar;

/// Errors produced by graph construction and the backward pass.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("conv2d: input has {input} channels but kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("conv2d: kernel {kh}x{kw} exceeds padded input {h}x{w}")]
    KernelTooLarge { kh: usize, kw: usize, h: usize, w: usize },
    #[error("conv2d: stride must be at least 1")]
    ZeroStride,
    #[error("maxpool2d: window {window} exceeds input {h}x{w}")]
    WindowTooLarge { window: usize, h: usize, w: usize },
    #[error("cross-entropy target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("{op}: expected rank-{expected} operand, got shape {shape:?}")]
    RankMismatch { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
}

/// Handle to a tensor stored in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node<T> {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<T>,
    pub(crate) grad: Option<Vec<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: OpKind<T>,
    pub(crate) inputs: Vec<Var>,
}

/// Computation graph: an arena of tensors plus the operations that link them.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        op: OpKind<T>,
        inputs: Vec<Var>,
    ) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node { shape, data, grad: None, requires_grad, op, inputs });
        Var(self.nodes.len() - 1)
    }

    /// Inserts a tensor that does not participate in differentiation.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var, TensorError> {
        self.insert(shape, data, false)
    }

    /// Inserts a tensor whose gradient will be populated by [`Graph::backward`].
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<T>) -> Result<Var, TensorError> {
        self.insert(shape, data, true)
    }

    fn insert(&mut self, shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        Ok(self.push(shape, data, requires_grad, OpKind::Leaf, Vec::new()))
    }

    pub fn constant_array(&mut self, a: &Array<T>) -> Var {
        self.push(a.shape().to_vec(), a.data().to_vec(), false, OpKind::Leaf, Vec::new())
    }

    pub fn leaf_array(&mut self, a: &Array<T>) -> Var {
        self.push(a.shape().to_vec(), a.data().to_vec(), true, OpKind::Leaf, Vec::new())
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    /// Gradient buffer of `v`, populated once a backward pass has reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, v: Var) -> T {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    pub fn to_array(&self, v: Var) -> Array<T> {
        Array::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Clears every gradient buffer; call between optimization steps when
    /// reusing leaves across backward passes.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Backpropagates from a scalar loss.
    ///
    /// Every tensor with `requires_grad` that the loss depends on ends up
    /// with a populated gradient. Repeated calls without [`Graph::zero_grads`]
    /// accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::NonScalarLoss { shape: self.nodes[loss.0].shape.clone() });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let order = self.topo_order(loss);
        let mut table: Vec<Option<Vec<T>>> = Vec::new();
        table.resize_with(loss.0 + 1, || None);
        table[loss.0] = Some(vec![T::one()]);
        for &idx in order.iter().rev() {
            let out_grad = table[idx].take().expect("reverse order reaches every visited node");
            ops::backprop(&self.nodes, idx, &out_grad, &mut table);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(g) => {
                    for (gi, oi) in g.iter_mut().zip(&out_grad) {
                        *gi = *gi + *oi;
                    }
                }
                None => node.grad = Some(out_grad),
            }
        }
        Ok(())
    }

    /// Post-order over the differentiable ancestors of `root`; each node
    /// appears exactly once, inputs before consumers.
    fn topo_order(&self, root: Var) -> Vec<usize> {
        let mut visited = vec![false; root.0 + 1];
        let mut order = Vec::new();
        let mut stack: Vec<(usize, usize)> = vec![(root.0, 0)];
        visited[root.0] = true;
        while let Some((idx, cursor)) = stack.last_mut() {
            let inputs = &self.nodes[*idx].inputs;
            if *cursor < inputs.len() {
                let child = inputs[*cursor].0;
                *cursor += 1;
                if !visited[child] && self.nodes[child].requires_grad {
                    visited[child] = true;
                    stack.push((child, 0));
                }
            } else {
                order.push(*idx);
                stack.pop();
            }
        }
        order
    }
}
