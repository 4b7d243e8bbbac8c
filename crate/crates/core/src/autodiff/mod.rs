//! Define-by-run reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation as it is evaluated. Handles ([`Var`])
//! are plain indices into the tape, so the graph is rebuilt from scratch for
//! each optimisation step:
//!
//! ```
//! use brite::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(vec![0.0, 1.0], &[2]).unwrap();
//! let y = tape.sin(x).unwrap();
//! let loss = tape.sum(y).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap()[0], 1.0);
//! ```
//!
//! Binary elementwise ops broadcast an operand whose shape is a suffix of the
//! other's (a bias row against a batch, or a single-element scalar against
//! anything). Every op checks its output for non-finite values and fails with
//! [`Error::Numeric`] rather than propagating NaN.

mod adam;
mod gradcheck;
mod grid;
mod ops;

pub use adam::AdamState;
pub use gradcheck::{check_gradients, GradCheck};

use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Sin(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>, usize),
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    GridSample {
        image: Var,
        coords: Var,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
    grad: Vec<f64>,
}

/// Recorded computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, values: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<Var> {
        if values.len() != numel(shape) {
            return Err(Error::shape(
                format!("{} values for shape {shape:?}", numel(shape)),
                format!("{}", values.len()),
            ));
        }
        self.push(shape.to_vec(), values, requires_grad, Op::Leaf)
    }

    /// Trainable input.
    pub fn param(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.leaf(values, shape, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        self.leaf(values, shape, false)
    }

    /// Zero-dimensional tensor.
    pub fn scalar(&mut self, value: f64, requires_grad: bool) -> Result<Var> {
        self.leaf(vec![value], &[], requires_grad)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn item(&self, v: Var) -> Result<f64> {
        match self.value(v) {
            [x] => Ok(*x),
            other => Err(Error::shape("one element", format!("{}", other.len()))),
        }
    }

    /// Gradient accumulated by [`Tape::backward`]; `None` before backward or
    /// for tensors that do not require a gradient.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let n = &self.nodes[v.0];
        (self.consumed && n.requires_grad).then_some(&n.grad[..])
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        value: Vec<f64>,
        requires_grad: bool,
        op: Op,
    ) -> Result<Var> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        if let Some(i) = value.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value at index {i}",
                op_name(&op)
            )));
        }
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
            grad: Vec::new(),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub(crate) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Reverse accumulation from a one-element `loss`. The tape can only be
    /// differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let n = &self.nodes[loss.0];
        if n.value.len() != 1 {
            return Err(Error::shape(
                "scalar loss",
                format!("tensor of shape {:?}", n.shape),
            ));
        }
        self.consumed = true;
        if !n.requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = vec![1.0];
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || self.nodes[i].grad.is_empty() {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut self.nodes[i].grad);
            self.propagate(Var(i), &g);
            self.nodes[i].grad = g;
        }
        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_empty() {
                node.grad = vec![0.0; node.value.len()];
            }
        }
        Ok(())
    }

    /// Adds into the gradient buffer of `v`; the closure may read node values.
    pub(crate) fn accumulate(&mut self, v: Var, contrib: impl FnOnce(&Self, &mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let mut grad = std::mem::take(&mut self.nodes[v.0].grad);
        if grad.is_empty() {
            grad = vec![0.0; self.nodes[v.0].value.len()];
        }
        contrib(self, &mut grad);
        self.nodes[v.0].grad = grad;
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::MatMul(..) => "matmul",
        Op::Sin(..) => "sin",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Softplus(..) => "softplus",
        Op::Square(..) => "square",
        Op::Sqrt(..) => "sqrt",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::Concat(..) => "concat",
        Op::Slice { .. } => "slice",
        Op::Reshape(..) => "reshape",
        Op::GridSample { .. } => "grid_sample",
    }
}
