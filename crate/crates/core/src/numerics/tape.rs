//! Reverse-mode gradient tape over matrix-valued nodes.
//!
//! Nodes are appended in evaluation order, so every node's parents have
//! smaller indices and a single reverse walk from the loss accumulates exact
//! gradients for every reachable leaf.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    Sum(NodeId),
    Scale(NodeId, f64),
    L1Distance(NodeId, NodeId),
    Transpose(NodeId),
    /// Binary cross-entropy against a fixed label; the parent is a 1x1
    /// probability, clamped to [1e-12, 1 - 1e-12] before the logs.
    BceLoss(NodeId, f64),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Append-only computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert an input or parameter node.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> NodeId {
        self.leaf(Matrix::row_vector(&[value]))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// a - b, composed from scalar-scale and add.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).relu();
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).tanh();
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).sigmoid();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).softmax_rows();
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_rows(&mats)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let value = self.value(a).slice_rows(start, end)?;
        Ok(self.push(value, Op::SliceRows(a, start, end)))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::row_vector(&[self.value(a).sum()]);
        self.push(value, Op::Sum(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c))
    }

    /// L1 distance between two equally shaped nodes, as a 1x1 node.
    pub fn l1_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = Matrix::row_vector(&[self.value(a).l1_distance(self.value(b))?]);
        Ok(self.push(value, Op::L1Distance(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// -y ln(p) - (1-y) ln(1-p) with p the 1x1 parent clamped away from 0/1.
    pub fn bce_loss(&mut self, yhat: NodeId, label: f64) -> Result<NodeId> {
        let p = self.value(yhat).scalar()?;
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let loss = -label * pc.ln() - (1.0 - label) * (1.0 - pc).ln();
        Ok(self.push(Matrix::row_vector(&[loss]), Op::BceLoss(yhat, label)))
    }

    /// Gradients of a scalar root with respect to every node that can reach
    /// it. The root must hold a 1x1 value.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be 1x1, got {}x{}",
                self.value(root).rows(),
                self.value(root).cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose())?;
                    let db = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Hadamard(a, b) => {
                    let da = g.hadamard(self.value(*b))?;
                    let db = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu(a) => {
                    // Subgradient 0 at exactly zero.
                    let mask = self.value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut grads, *a, g.hadamard(&mask)?);
                }
                Op::Tanh(a) => {
                    let deriv = self.nodes[id].value.map(|y| 1.0 - y * y);
                    accumulate(&mut grads, *a, g.hadamard(&deriv)?);
                }
                Op::Sigmoid(a) => {
                    let deriv = self.nodes[id].value.map(|y| y * (1.0 - y));
                    accumulate(&mut grads, *a, g.hadamard(&deriv)?);
                }
                Op::SoftmaxRows(a) => {
                    let s = &self.nodes[id].value;
                    let mut da = Matrix::zeros(s.rows(), s.cols());
                    for i in 0..s.rows() {
                        let dot: f64 = s
                            .row(i)
                            .iter()
                            .zip(g.row(i))
                            .map(|(&sv, &gv)| sv * gv)
                            .sum();
                        for j in 0..s.cols() {
                            da.set(i, j, s.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let slice = g.slice_rows(offset, offset + rows)?;
                        accumulate(&mut grads, p, slice);
                        offset += rows;
                    }
                }
                Op::SliceRows(a, start, _end) => {
                    let parent = self.value(*a);
                    let mut da = Matrix::zeros(parent.rows(), parent.cols());
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            da.set(start + i, j, g.get(i, j));
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let parent = self.value(*a);
                    let gs = g.scalar()?;
                    accumulate(&mut grads, *a, Matrix::filled(parent.rows(), parent.cols(), gs));
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, *a, g.scale(*c));
                }
                Op::L1Distance(a, b) => {
                    let gs = g.scalar()?;
                    let sign = self
                        .value(*a)
                        .sub(self.value(*b))?
                        .map(|d| if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        });
                    accumulate(&mut grads, *a, sign.scale(gs));
                    accumulate(&mut grads, *b, sign.scale(-gs));
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, *a, g.transpose());
                }
                Op::BceLoss(a, label) => {
                    let p = self.value(*a).scalar()?;
                    let d = if p > BCE_EPS && p < 1.0 - BCE_EPS {
                        -label / p + (1.0 - label) / (1.0 - p)
                    } else {
                        0.0
                    };
                    accumulate(&mut grads, *a, g.scale(d));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) {
    match &mut grads[id.0] {
        Some(existing) => {
            *existing = existing.add(&delta).expect("gradient shape mismatch");
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Gradient map produced by a backward pass, indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `id`; zero-filled if the node does not reach the root.
    pub fn get(&self, id: NodeId, tape: &Tape) -> Matrix {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let v = tape.value(id);
                Matrix::zeros(v.rows(), v.cols())
            }
        }
    }

    pub fn try_get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }
}
