//! Static-query attention over interacted features and the sigmoid head.
//!
//! The static row of Z* issues the only query; keys and values come from all
//! F+1 rows, the static one included, so the comprehensive representation is
//! e = sum_i alpha_i v_i + alpha_s v_s.

use serde::{Deserialize, Serialize};

use crate::embedding::fill_uniform;
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::tape::{NodeId, Tape};

const CLAMP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_pred: Matrix,
}

impl HeadParams {
    pub fn zeros(d: usize, d_a: usize) -> Self {
        HeadParams {
            w_q: Matrix::zeros(d, d_a),
            w_k: Matrix::zeros(d, d_a),
            w_v: Matrix::zeros(d, d_a),
            w_pred: Matrix::zeros(d_a, 1),
        }
    }

    pub fn init(d: usize, d_a: usize, rng: &mut SeededRng) -> Self {
        let mut p = HeadParams::zeros(d, d_a);
        let bound = 1.0 / (d as f64).sqrt();
        fill_uniform(&mut p.w_q, bound, rng);
        fill_uniform(&mut p.w_k, bound, rng);
        fill_uniform(&mut p.w_v, bound, rng);
        fill_uniform(&mut p.w_pred, 1.0 / (d_a as f64).sqrt(), rng);
        p
    }

    pub fn stage(&self, tape: &mut Tape) -> HeadNodes {
        HeadNodes {
            w_q: tape.leaf(self.w_q.clone()),
            w_k: tape.leaf(self.w_k.clone()),
            w_v: tape.leaf(self.w_v.clone()),
            w_pred: tape.leaf(self.w_pred.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub w_pred: NodeId,
}

/// Tape positions of the attention outputs.
#[derive(Debug, Clone, Copy)]
pub struct PredictionNodes {
    /// 1x1 probability.
    pub y_hat: NodeId,
    /// 1x(F+1) attention weights.
    pub alpha: NodeId,
    /// 1xd_a comprehensive representation.
    pub representation: NodeId,
}

/// Attention scores tau_i = tanh(q_s . k_i), weights alpha = softmax(tau),
/// e = alpha-weighted sum of values, y_hat = sigmoid(e W_pred).
pub fn attend_predict(
    tape: &mut Tape,
    z_star: NodeId,
    nodes: &HeadNodes,
) -> Result<PredictionNodes> {
    let rows = tape.value(z_star).rows();
    if rows < 2 {
        return Err(Error::contract(format!(
            "attention needs at least one dynamic row plus the static row, got {rows}"
        )));
    }
    let static_row = tape.slice_rows(z_star, rows - 1, rows)?;
    let query = tape.matmul(static_row, nodes.w_q)?;
    let keys = tape.matmul(z_star, nodes.w_k)?;
    let values = tape.matmul(z_star, nodes.w_v)?;
    let query_col = tape.transpose(query);
    let scores = tape.matmul(keys, query_col)?;
    let scores = tape.tanh(scores);
    let scores_row = tape.transpose(scores);
    let alpha = tape.softmax_rows(scores_row);
    let representation = tape.matmul(alpha, values)?;
    let logit = tape.matmul(representation, nodes.w_pred)?;
    let y_hat = tape.sigmoid(logit);
    Ok(PredictionNodes {
        y_hat,
        alpha,
        representation,
    })
}

/// Value-level attention output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    pub y_hat: f64,
    pub alpha: Vec<f64>,
    pub representation: Vec<f64>,
}

pub fn attend_predict_values(z_star: &Matrix, params: &HeadParams) -> Result<PredictionOutput> {
    let mut tape = Tape::new();
    let nodes = params.stage(&mut tape);
    let z = tape.leaf(z_star.clone());
    let out = attend_predict(&mut tape, z, &nodes)?;
    Ok(PredictionOutput {
        y_hat: tape.value(out.y_hat).scalar()?,
        alpha: tape.value(out.alpha).data().to_vec(),
        representation: tape.value(out.representation).data().to_vec(),
    })
}

/// -y ln(p) - (1-y) ln(1-p) with p clamped to [1e-12, 1 - 1e-12].
pub fn bce_loss(y_hat: f64, y: f64) -> f64 {
    let p = y_hat.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
    -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
}
