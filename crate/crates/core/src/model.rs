//! The assembled model: embedding, graph interaction, attention head.
//!
//! `ModelParams` owns every trainable tensor and exposes them in a fixed,
//! documented order so the optimizer state and checkpoints stay aligned
//! across runs. `patient_loss` wires one patient's forward pass and binary
//! cross-entropy onto a tape; `batch_loss` averages over a minibatch.

use serde::{Deserialize, Serialize};

use crate::data::PatientRecord;
use crate::embedding::{embed_patient, EmbeddingNodes, EmbeddingParams};
use crate::error::{Error, Result};
use crate::interaction::{interact, GcnNodes, GcnParams};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::tape::{NodeId, Tape};
use crate::prediction::{attend_predict, HeadNodes, HeadParams, PredictionNodes, PredictionOutput};

/// Layer widths. `hidden` is each GRU's state size, `embed` the per-feature
/// embedding width, `attention` the query/key/value width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub dynamic_features: usize,
    pub static_features: usize,
    pub hidden: usize,
    pub embed: usize,
    pub attention: usize,
}

impl ModelDims {
    /// Default widths: hidden 16, embed 16, attention matching embed.
    pub fn new(dynamic_features: usize, static_features: usize) -> Self {
        ModelDims {
            dynamic_features,
            static_features,
            hidden: 16,
            embed: 16,
            attention: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dynamic_features == 0 {
            return Err(Error::contract("model needs at least one dynamic feature"));
        }
        if self.hidden == 0 || self.embed == 0 || self.attention == 0 {
            return Err(Error::contract("layer widths must be positive"));
        }
        Ok(())
    }

    /// Rows of the embedding matrix: one per dynamic feature plus the static
    /// row.
    pub fn graph_nodes(&self) -> usize {
        self.dynamic_features + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embedding: EmbeddingParams,
    pub gcn: GcnParams,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn zeros(dims: &ModelDims) -> Result<Self> {
        dims.validate()?;
        Ok(ModelParams {
            embedding: EmbeddingParams::zeros(
                dims.dynamic_features,
                dims.static_features,
                dims.hidden,
                dims.embed,
            ),
            gcn: GcnParams::zeros(dims.embed),
            head: HeadParams::zeros(dims.embed, dims.attention),
        })
    }

    pub fn init(dims: &ModelDims, rng: &mut SeededRng) -> Result<Self> {
        dims.validate()?;
        Ok(ModelParams {
            embedding: EmbeddingParams::init(
                dims.dynamic_features,
                dims.static_features,
                dims.hidden,
                dims.embed,
                rng,
            ),
            gcn: GcnParams::init(dims.embed, rng),
            head: HeadParams::init(dims.embed, dims.attention, rng),
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            dynamic_features: self.embedding.feature_count(),
            static_features: self.embedding.w_s.rows(),
            hidden: self.embedding.w_proj.rows(),
            embed: self.embedding.w_proj.cols(),
            attention: self.head.w_q.cols(),
        }
    }

    /// All trainable tensors in canonical order: for each GRU channel
    /// w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h; then w_s, w_proj,
    /// w_1, w_2, w_q, w_k, w_v, w_pred. Optimizer slots and staged node ids
    /// follow the same order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(self.tensor_count());
        for c in &self.embedding.channels {
            out.extend([
                &c.w_z, &c.u_z, &c.b_z, &c.w_r, &c.u_r, &c.b_r, &c.w_h, &c.u_h, &c.b_h,
            ]);
        }
        out.extend([&self.embedding.w_s, &self.embedding.w_proj]);
        out.extend([&self.gcn.w_1, &self.gcn.w_2]);
        out.extend([
            &self.head.w_q,
            &self.head.w_k,
            &self.head.w_v,
            &self.head.w_pred,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(self.tensor_count());
        for c in &mut self.embedding.channels {
            out.extend([
                &mut c.w_z, &mut c.u_z, &mut c.b_z, &mut c.w_r, &mut c.u_r, &mut c.b_r,
                &mut c.w_h, &mut c.u_h, &mut c.b_h,
            ]);
        }
        out.extend([&mut self.embedding.w_s, &mut self.embedding.w_proj]);
        out.extend([&mut self.gcn.w_1, &mut self.gcn.w_2]);
        out.extend([
            &mut self.head.w_q,
            &mut self.head.w_k,
            &mut self.head.w_v,
            &mut self.head.w_pred,
        ]);
        out
    }

    pub fn tensor_count(&self) -> usize {
        9 * self.embedding.channels.len() + 8
    }

    pub fn stage(&self, tape: &mut Tape) -> ModelNodes {
        ModelNodes {
            embedding: self.embedding.stage(tape),
            gcn: self.gcn.stage(tape),
            head: self.head.stage(tape),
        }
    }
}

/// Tape positions of every staged parameter tensor.
#[derive(Debug, Clone)]
pub struct ModelNodes {
    pub embedding: EmbeddingNodes,
    pub gcn: GcnNodes,
    pub head: HeadNodes,
}

impl ModelNodes {
    /// Node ids in the same canonical order as `ModelParams::tensors`.
    pub fn tensor_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for c in &self.embedding.channels {
            out.extend(c.ids());
        }
        out.extend([self.embedding.w_s, self.embedding.w_proj]);
        out.extend([self.gcn.w_1, self.gcn.w_2]);
        out.extend([
            self.head.w_q,
            self.head.w_k,
            self.head.w_v,
            self.head.w_pred,
        ]);
        out
    }
}

fn check_adjacency(tape: &Tape, nodes: &ModelNodes, a: NodeId) -> Result<()> {
    let expected = nodes.embedding.channels.len() + 1;
    let a_val = tape.value(a);
    if a_val.rows() != expected || a_val.cols() != expected {
        return Err(Error::contract(format!(
            "adjacency must be {expected}x{expected} for {} features, got {}x{}",
            expected - 1,
            a_val.rows(),
            a_val.cols()
        )));
    }
    Ok(())
}

/// Embed, interact, attend: the full forward pass for one patient against a
/// staged adjacency node.
pub fn patient_forward(
    tape: &mut Tape,
    nodes: &ModelNodes,
    record: &PatientRecord,
    a: NodeId,
) -> Result<PredictionNodes> {
    check_adjacency(tape, nodes, a)?;
    let z = embed_patient(tape, &nodes.embedding, record)?;
    let z_star = interact(tape, z, a, &nodes.gcn)?;
    attend_predict(tape, z_star, &nodes.head)
}

/// Forward plus the cross-entropy against the record's label. Returns the
/// 1x1 loss node alongside the prediction nodes.
pub fn patient_loss(
    tape: &mut Tape,
    nodes: &ModelNodes,
    record: &PatientRecord,
    a: NodeId,
) -> Result<(NodeId, PredictionNodes)> {
    let pred = patient_forward(tape, nodes, record, a)?;
    let loss = tape.bce_loss(pred.y_hat, f64::from(record.label))?;
    Ok((loss, pred))
}

/// Mean cross-entropy over a minibatch, built on one tape so a single
/// backward pass yields the batch gradient.
pub fn batch_loss(
    tape: &mut Tape,
    nodes: &ModelNodes,
    records: &[&PatientRecord],
    a: NodeId,
) -> Result<NodeId> {
    if records.is_empty() {
        return Err(Error::contract("batch is empty"));
    }
    let mut losses = Vec::with_capacity(records.len());
    for record in records {
        let (loss, _) = patient_loss(tape, nodes, record, a)?;
        losses.push(loss);
    }
    let stacked = tape.concat_rows(&losses)?;
    let total = tape.sum(stacked);
    Ok(tape.scale(total, 1.0 / records.len() as f64))
}

/// Value-only prediction for one patient on a throwaway tape.
pub fn predict_patient(
    params: &ModelParams,
    a: &Matrix,
    record: &PatientRecord,
) -> Result<PredictionOutput> {
    let mut tape = Tape::new();
    let nodes = params.stage(&mut tape);
    let a_node = tape.leaf(a.clone());
    let pred = patient_forward(&mut tape, &nodes, record, a_node)?;
    Ok(PredictionOutput {
        y_hat: tape.value(pred.y_hat).scalar()?,
        alpha: tape.value(pred.alpha).data().to_vec(),
        representation: tape.value(pred.representation).data().to_vec(),
    })
}
