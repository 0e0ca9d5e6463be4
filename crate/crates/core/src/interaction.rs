//! Two-layer graph convolution over the correlation graph.
//!
//! Layer rule: g(Z) = ReLU(A Z W) with the raw adjacency, no bias. Layer 1
//! mixes features within a group (plus the static node); layer 2 routes
//! information between groups through the static node.

use serde::{Deserialize, Serialize};

use crate::embedding::fill_uniform;
use crate::error::Result;
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::tape::{NodeId, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub w_1: Matrix,
    pub w_2: Matrix,
}

impl GcnParams {
    pub fn zeros(d: usize) -> Self {
        GcnParams {
            w_1: Matrix::zeros(d, d),
            w_2: Matrix::zeros(d, d),
        }
    }

    pub fn init(d: usize, rng: &mut SeededRng) -> Self {
        let mut p = GcnParams::zeros(d);
        let bound = 1.0 / (d as f64).sqrt();
        fill_uniform(&mut p.w_1, bound, rng);
        fill_uniform(&mut p.w_2, bound, rng);
        p
    }

    pub fn stage(&self, tape: &mut Tape) -> GcnNodes {
        GcnNodes {
            w_1: tape.leaf(self.w_1.clone()),
            w_2: tape.leaf(self.w_2.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GcnNodes {
    pub w_1: NodeId,
    pub w_2: NodeId,
}

/// ReLU(A Z W).
pub fn gcn_layer(tape: &mut Tape, z: NodeId, a: NodeId, w: NodeId) -> Result<NodeId> {
    let mixed = tape.matmul(a, z)?;
    let mapped = tape.matmul(mixed, w)?;
    Ok(tape.relu(mapped))
}

/// Z* = g_2(g_1(Z)).
pub fn interact(tape: &mut Tape, z: NodeId, a: NodeId, nodes: &GcnNodes) -> Result<NodeId> {
    let first = gcn_layer(tape, z, a, nodes.w_1)?;
    gcn_layer(tape, first, a, nodes.w_2)
}

/// Value-only interaction on a throwaway tape.
pub fn interact_values(z: &Matrix, a: &Matrix, params: &GcnParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let nodes = params.stage(&mut tape);
    let z = tape.leaf(z.clone());
    let a = tape.leaf(a.clone());
    let out = interact(&mut tape, z, a, &nodes)?;
    Ok(tape.value(out).clone())
}

/// Optional symmetric normalization D^{-1/2} A D^{-1/2}; off by default in
/// training, available for experiments.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(crate::error::Error::contract(format!(
            "adjacency must be square, got {n}x{}",
            a.cols()
        )));
    }
    let mut inv_sqrt = vec![0.0; n];
    for i in 0..n {
        let d: f64 = a.row(i).iter().sum();
        if d <= 0.0 {
            return Err(crate::error::Error::contract(format!(
                "adjacency row {i} has non-positive degree {d}"
            )));
        }
        inv_sqrt[i] = 1.0 / d.sqrt();
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, inv_sqrt[i] * a.get(i, j) * inv_sqrt[j]);
        }
    }
    Ok(out)
}
