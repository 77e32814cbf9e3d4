//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to its variables. Nodes are
//! appended in evaluation order, so the node list is already topologically
//! sorted and [`Tape::backward`] is a single reverse sweep.
//!
//! ```
//! use driftlab::ndmath::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
//! let b = tape.leaf(Tensor::vector(vec![3.0, 4.0]));
//! let y = tape.dot(a, b).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(a).unwrap().data(), &[3.0, 4.0]);
//! assert_eq!(grads.get(b).unwrap().data(), &[1.0, 2.0]);
//! ```

use std::collections::BTreeMap;

use super::{MathError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    ScalarMul { tensor: Var, scalar: Var },
    Tanh(Var),
    Recip(Var),
    Norm(Var),
    Dot(Var, Var),
    MeanOverFrames(Var),
    ConcatRows(Vec<Var>),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph. Build a fresh tape per forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every leaf of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_leaf: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    pub fn take(&mut self, leaf: Var) -> Option<Tensor> {
        self.by_leaf.remove(&leaf)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
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

    /// Trainable / optimisable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = self.needs(inputs);
        self.push(value, op, needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.record(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.record(value, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).scale(k);
        self.record(value, Op::Scale(a, k), &[a])
    }

    /// `scalar · tensor`, where `scalar` is a one-element node.
    pub fn scalar_mul(&mut self, tensor: Var, scalar: Var) -> Result<Var, MathError> {
        let s = self.scalar_value("scalar_mul", scalar)?;
        let value = self.value(tensor).scale(s);
        Ok(self.record(value, Op::ScalarMul { tensor, scalar }, &[tensor, scalar]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.record(value, Op::Tanh(a), &[a])
    }

    /// Elementwise reciprocal.
    pub fn recip(&mut self, a: Var) -> Result<Var, MathError> {
        if self.value(a).data().contains(&0.0) {
            return Err(MathError::Domain("reciprocal of zero".into()));
        }
        let value = self.value(a).map(f64::recip);
        Ok(self.record(value, Op::Recip(a), &[a]))
    }

    /// Euclidean (Frobenius) norm, a scalar node.
    pub fn norm(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).norm());
        self.record(value, Op::Norm(a), &[a])
    }

    /// Sum of elementwise products of two equally shaped tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let value = Tensor::scalar(self.value(a).dot(self.value(b))?);
        Ok(self.record(value, Op::Dot(a, b), &[a, b]))
    }

    pub fn mean_over_frames(&mut self, a: Var) -> Result<Var, MathError> {
        let value = self.value(a).mean_over_frames()?;
        Ok(self.record(value, Op::MeanOverFrames(a), &[a]))
    }

    pub fn concat_rows(&mut self, blocks: &[Var]) -> Result<Var, MathError> {
        let tensors: Vec<&Tensor> = blocks.iter().map(|&b| self.value(b)).collect();
        let value = Tensor::concat_rows(&tensors)?;
        Ok(self.record(value, Op::ConcatRows(blocks.to_vec()), blocks))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, MathError> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.record(value, Op::Reshape(a), &[a]))
    }

    // Composite operations, expressed through the primitives above.

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    /// Repeats a length-`m` vector as the `N` columns of an `m × N` matrix.
    pub fn broadcast_cols(&mut self, v: Var, frames: usize) -> Result<Var, MathError> {
        let m = self.value(v).len();
        let col = self.reshape(v, &[m, 1])?;
        let ones = self.constant(Tensor::ones(&[1, frames]));
        self.matmul(col, ones)
    }

    /// `x / ‖x‖`.
    pub fn normalize(&mut self, x: Var) -> Result<Var, MathError> {
        if self.value(x).norm() == 0.0 {
            return Err(MathError::ZeroNorm { argument: "input" });
        }
        let n = self.norm(x);
        let inv = self.recip(n)?;
        self.scalar_mul(x, inv)
    }

    /// `1 − a·b / (‖a‖‖b‖)` as a scalar node.
    pub fn cosine_distance(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        self.value(a).check_same_shape("cosine_distance", self.value(b))?;
        if self.value(a).norm() == 0.0 {
            return Err(MathError::ZeroNorm { argument: "a" });
        }
        if self.value(b).norm() == 0.0 {
            return Err(MathError::ZeroNorm { argument: "b" });
        }
        let ab = self.dot(a, b)?;
        let na = self.norm(a);
        let nb = self.norm(b);
        let inv_na = self.recip(na)?;
        let inv_nb = self.recip(nb)?;
        let scaled = self.scalar_mul(ab, inv_na)?;
        let cos = self.scalar_mul(scaled, inv_nb)?;
        let neg = self.scale(cos, -1.0);
        let one = self.constant(Tensor::scalar(1.0));
        self.add(one, neg)
    }

    /// Mean of squared differences over all elements.
    pub fn mean_squared_error(&mut self, a: Var, b: Var) -> Result<Var, MathError> {
        let count = self.value(a).len().max(1) as f64;
        let diff = self.sub(a, b)?;
        let sq = self.dot(diff, diff)?;
        Ok(self.scale(sq, 1.0 / count))
    }

    fn scalar_value(&self, op: &'static str, var: Var) -> Result<f64, MathError> {
        let t = self.value(var);
        t.item().ok_or_else(|| MathError::NotScalar {
            op,
            shape: t.shape().to_vec(),
        })
    }

    /// Reverse sweep from a scalar output; returns the gradient for every
    /// leaf (zero for leaves the output does not depend on).
    pub fn backward(&self, output: Var) -> Result<Gradients, MathError> {
        let out_value = self.value(output);
        if !out_value.is_scalar() {
            return Err(MathError::NotScalar {
                op: "backward",
                shape: out_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::ones(out_value.shape()));

        for idx in (0..=output.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(grad);
                continue;
            }
            for (input, contribution) in self.local_gradients(node, &grad)? {
                match &mut grads[input.0] {
                    Some(existing) => existing.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let by_leaf = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(i, n)| {
                let g = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(n.value.shape()));
                (Var(i), g)
            })
            .collect();
        Ok(Gradients { by_leaf })
    }

    /// Vector-Jacobian products of one node with respect to those inputs
    /// that need a gradient.
    fn local_gradients(&self, node: &Node, grad: &Tensor) -> Result<Vec<(Var, Tensor)>, MathError> {
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    out.push((*a, grad.matmul(&self.value(*b).transpose()?)?));
                }
                if wants(b) {
                    out.push((*b, self.value(*a).transpose()?.matmul(grad)?));
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    out.push((*a, grad.clone()));
                }
                if wants(b) {
                    out.push((*b, grad.clone()));
                }
            }
            Op::Scale(a, k) => {
                if wants(a) {
                    out.push((*a, grad.scale(*k)));
                }
            }
            Op::ScalarMul { tensor, scalar } => {
                if wants(tensor) {
                    let s = self.scalar_value("scalar_mul", *scalar)?;
                    out.push((*tensor, grad.scale(s)));
                }
                if wants(scalar) {
                    let g = grad.dot(self.value(*tensor))?;
                    let shape = self.value(*scalar).shape().to_vec();
                    out.push((*scalar, Tensor::new(shape, vec![g])?));
                }
            }
            Op::Tanh(a) => {
                if wants(a) {
                    out.push((*a, grad.zip_with(&node.value, |g, y| g * (1.0 - y * y))));
                }
            }
            Op::Recip(a) => {
                if wants(a) {
                    out.push((*a, grad.zip_with(&node.value, |g, y| -g * y * y)));
                }
            }
            Op::Norm(a) => {
                if wants(a) {
                    let n = node.value.data()[0];
                    let g = grad.data()[0];
                    let k = if n > 0.0 { g / n } else { 0.0 };
                    out.push((*a, self.value(*a).scale(k)));
                }
            }
            Op::Dot(a, b) => {
                let g = grad.data()[0];
                if wants(a) {
                    out.push((*a, self.value(*b).scale(g)));
                }
                if wants(b) {
                    out.push((*b, self.value(*a).scale(g)));
                }
            }
            Op::MeanOverFrames(a) => {
                if wants(a) {
                    let input = self.value(*a);
                    let (rows, cols) = (input.rows(), input.cols());
                    let inv = 1.0 / cols as f64;
                    let mut data = Vec::with_capacity(rows * cols);
                    for &g in grad.data() {
                        data.extend(std::iter::repeat_n(g * inv, cols));
                    }
                    out.push((*a, Tensor::matrix(rows, cols, data)?));
                }
            }
            Op::ConcatRows(blocks) => {
                let cols = grad.cols();
                let mut offset = 0;
                for block in blocks {
                    let shape = self.value(*block).shape().to_vec();
                    let len = shape[0] * cols;
                    if wants(block) {
                        let slice = grad.data()[offset..offset + len].to_vec();
                        out.push((*block, Tensor::new(shape, slice)?));
                    }
                    offset += len;
                }
            }
            Op::Reshape(a) => {
                if wants(a) {
                    out.push((*a, grad.reshape(self.value(*a).shape())?));
                }
            }
        }
        Ok(out)
    }
}
