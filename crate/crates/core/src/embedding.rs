//! Per-feature GRU embedding and the shared activated projection.
//!
//! Every dynamic feature has its own GRU over its univariate series; the
//! static vector passes through a linear map. All F+1 hidden states share one
//! projection, so the embedding matrix Z is (F+1) x d with the static row
//! last. Forward passes build onto a gradient tape; `embed_patient_values`
//! wraps that for value-only callers.

use serde::{Deserialize, Serialize};

use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::tape::{NodeId, Tape};

/// One GRU channel: update gate z, reset gate r, candidate h~.
/// Convention: h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ h~_t, h_0 = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruChannelParams {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
}

impl GruChannelParams {
    pub fn zeros(h: usize) -> Self {
        GruChannelParams {
            w_z: Matrix::zeros(1, h),
            u_z: Matrix::zeros(h, h),
            b_z: Matrix::zeros(1, h),
            w_r: Matrix::zeros(1, h),
            u_r: Matrix::zeros(h, h),
            b_r: Matrix::zeros(1, h),
            w_h: Matrix::zeros(1, h),
            u_h: Matrix::zeros(h, h),
            b_h: Matrix::zeros(1, h),
        }
    }

    /// Input weights uniform(-1, 1) (fan-in 1), recurrent weights
    /// uniform(+-1/sqrt(h)), biases zero.
    pub fn init(h: usize, rng: &mut SeededRng) -> Self {
        let mut p = GruChannelParams::zeros(h);
        let input_bound = 1.0;
        let recurrent_bound = 1.0 / (h as f64).sqrt();
        for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            fill_uniform(m, input_bound, rng);
        }
        for m in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            fill_uniform(m, recurrent_bound, rng);
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn stage(&self, tape: &mut Tape) -> GruChannelNodes {
        GruChannelNodes {
            w_z: tape.leaf(self.w_z.clone()),
            u_z: tape.leaf(self.u_z.clone()),
            b_z: tape.leaf(self.b_z.clone()),
            w_r: tape.leaf(self.w_r.clone()),
            u_r: tape.leaf(self.u_r.clone()),
            b_r: tape.leaf(self.b_r.clone()),
            w_h: tape.leaf(self.w_h.clone()),
            u_h: tape.leaf(self.u_h.clone()),
            b_h: tape.leaf(self.b_h.clone()),
        }
    }
}

pub(crate) fn fill_uniform(m: &mut Matrix, bound: f64, rng: &mut SeededRng) {
    for v in m.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
}

/// Tape positions of one staged GRU channel.
#[derive(Debug, Clone, Copy)]
pub struct GruChannelNodes {
    pub w_z: NodeId,
    pub u_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub u_r: NodeId,
    pub b_r: NodeId,
    pub w_h: NodeId,
    pub u_h: NodeId,
    pub b_h: NodeId,
}

impl GruChannelNodes {
    pub fn ids(&self) -> [NodeId; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h,
            self.b_h,
        ]
    }
}

/// Run one GRU channel over a series, returning the final hidden state as a
/// 1 x h node.
pub fn gru_forward(tape: &mut Tape, nodes: &GruChannelNodes, series: &[f64]) -> Result<NodeId> {
    if series.is_empty() {
        return Err(Error::contract("GRU input series is empty"));
    }
    let h = tape.value(nodes.w_z).cols();
    let ones = tape.leaf(Matrix::filled(1, h, 1.0));
    let mut hidden = tape.leaf(Matrix::zeros(1, h));
    for &x in series {
        let x_node = tape.leaf(Matrix::row_vector(&[x]));
        let z = gate(tape, x_node, hidden, nodes.w_z, nodes.u_z, nodes.b_z)?;
        let z = tape.sigmoid(z);
        let r = gate(tape, x_node, hidden, nodes.w_r, nodes.u_r, nodes.b_r)?;
        let r = tape.sigmoid(r);
        let gated_hidden = tape.hadamard(r, hidden)?;
        let candidate = gate(tape, x_node, gated_hidden, nodes.w_h, nodes.u_h, nodes.b_h)?;
        let candidate = tape.tanh(candidate);
        let keep = tape.sub(ones, z)?;
        let kept = tape.hadamard(keep, hidden)?;
        let taken = tape.hadamard(z, candidate)?;
        hidden = tape.add(kept, taken)?;
    }
    Ok(hidden)
}

/// x*W + h*U + b for one gate's pre-activation.
fn gate(
    tape: &mut Tape,
    x: NodeId,
    hidden: NodeId,
    w: NodeId,
    u: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let from_input = tape.matmul(x, w)?;
    let from_hidden = tape.matmul(hidden, u)?;
    let s = tape.add(from_input, from_hidden)?;
    tape.add(s, b)
}

/// Embedding parameters shared across patients: F GRU channels, the static
/// weight, and the projection applied to all F+1 hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub channels: Vec<GruChannelParams>,
    pub w_s: Matrix,
    pub w_proj: Matrix,
}

impl EmbeddingParams {
    pub fn zeros(f: usize, s: usize, h: usize, d: usize) -> Self {
        EmbeddingParams {
            channels: (0..f).map(|_| GruChannelParams::zeros(h)).collect(),
            w_s: Matrix::zeros(s, h),
            w_proj: Matrix::zeros(h, d),
        }
    }

    pub fn init(f: usize, s: usize, h: usize, d: usize, rng: &mut SeededRng) -> Self {
        let mut p = EmbeddingParams::zeros(f, s, h, d);
        // Every channel starts from the same draw (they diverge through
        // their own gradients). Starting them independently would make
        // distances between two features' embeddings reflect which random
        // map each feature got, drowning the series similarity that the
        // correlation estimate is after.
        let shared = GruChannelParams::init(h, rng);
        p.channels = vec![shared; f];
        fill_uniform(&mut p.w_s, 1.0 / (s.max(1) as f64).sqrt(), rng);
        fill_uniform(&mut p.w_proj, 1.0 / (h as f64).sqrt(), rng);
        p
    }

    pub fn feature_count(&self) -> usize {
        self.channels.len()
    }

    pub fn stage(&self, tape: &mut Tape) -> EmbeddingNodes {
        EmbeddingNodes {
            channels: self.channels.iter().map(|c| c.stage(tape)).collect(),
            w_s: tape.leaf(self.w_s.clone()),
            w_proj: tape.leaf(self.w_proj.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingNodes {
    pub channels: Vec<GruChannelNodes>,
    pub w_s: NodeId,
    pub w_proj: NodeId,
}

/// Embed one preprocessed patient: per-feature GRU states and the projected
/// static state, stacked and projected as Z = ReLU([h_1; ..; h_F; h_s] W_proj).
/// Returns the (F+1) x d embedding node.
pub fn embed_patient(
    tape: &mut Tape,
    nodes: &EmbeddingNodes,
    record: &PatientRecord,
) -> Result<NodeId> {
    let f = nodes.channels.len();
    if record.dynamic.cols() != f {
        return Err(Error::contract(format!(
            "record has {} dynamic features, parameters have {f}",
            record.dynamic.cols()
        )));
    }
    let mut rows = Vec::with_capacity(f + 1);
    for (i, channel) in nodes.channels.iter().enumerate() {
        let series: Vec<f64> = (0..record.visit_count())
            .map(|t| record.dynamic.get(t, i))
            .collect();
        rows.push(gru_forward(tape, channel, &series)?);
    }
    let s_row = tape.leaf(Matrix::row_vector(&record.static_features));
    rows.push(tape.matmul(s_row, nodes.w_s)?);
    let stacked = tape.concat_rows(&rows)?;
    let projected = tape.matmul(stacked, nodes.w_proj)?;
    Ok(tape.relu(projected))
}

/// Value-only embedding on a throwaway tape.
pub fn embed_patient_values(params: &EmbeddingParams, record: &PatientRecord) -> Result<Matrix> {
    let mut tape = Tape::new();
    let nodes = params.stage(&mut tape);
    let z = embed_patient(&mut tape, &nodes, record)?;
    Ok(tape.value(z).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dynamic: Matrix, statics: Vec<f64>) -> PatientRecord {
        PatientRecord {
            id: "t".into(),
            dynamic,
            static_features: statics,
            label: 0,
        }
    }

    fn run_gru(params: &GruChannelParams, series: &[f64]) -> Matrix {
        let mut tape = Tape::new();
        let nodes = params.stage(&mut tape);
        let h = gru_forward(&mut tape, &nodes, series).unwrap();
        tape.value(h).clone()
    }

    #[test]
    fn zero_parameters_fix_hidden_at_zero() {
        let params = GruChannelParams::zeros(3);
        let h = run_gru(&params, &[1.0, -2.0, 0.5]);
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_hand_value() {
        // z = sigmoid(0) = 1/2 and the candidate is tanh(x), so
        // h_1 = 0.5 * tanh(1).
        let mut params = GruChannelParams::zeros(1);
        params.w_h.set(0, 0, 1.0);
        let h = run_gru(&params, &[1.0]);
        let expected = 0.5 * 1.0f64.tanh();
        assert!((h.get(0, 0) - expected).abs() < 1e-15);
        assert!((h.get(0, 0) - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn empty_series_rejected() {
        let params = GruChannelParams::zeros(2);
        let mut tape = Tape::new();
        let nodes = params.stage(&mut tape);
        assert!(gru_forward(&mut tape, &nodes, &[]).is_err());
    }

    #[test]
    fn order_sensitivity_on_crafted_parameters() {
        // A strongly input-driven update gate makes the final state depend on
        // which value arrives last.
        let mut params = GruChannelParams::zeros(1);
        params.w_z.set(0, 0, 5.0);
        params.w_h.set(0, 0, 1.0);
        params.u_h.set(0, 0, 0.5);
        let forward = run_gru(&params, &[1.0, -1.0]);
        let reversed = run_gru(&params, &[-1.0, 1.0]);
        assert!((forward.get(0, 0) - reversed.get(0, 0)).abs() > 1e-3);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(31);
        let params = GruChannelParams::init(3, &mut rng);
        let series = [0.4, -1.1, 0.7, 0.2];

        let mut tape = Tape::new();
        let nodes = params.stage(&mut tape);
        let h = gru_forward(&mut tape, &nodes, &series).unwrap();
        let root = tape.sum(h);
        let grads = tape.backward(root).unwrap();

        fn field(p: &mut GruChannelParams, which: usize) -> &mut Matrix {
            match which {
                0 => &mut p.w_z,
                1 => &mut p.u_z,
                2 => &mut p.b_z,
                3 => &mut p.w_r,
                4 => &mut p.u_r,
                5 => &mut p.b_r,
                6 => &mut p.w_h,
                7 => &mut p.u_h,
                _ => &mut p.b_h,
            }
        }
        let eval = |p: &GruChannelParams| -> f64 {
            let mut t = Tape::new();
            let n = p.stage(&mut t);
            let h = gru_forward(&mut t, &n, &series).unwrap();
            let r = t.sum(h);
            t.value(r).scalar().unwrap()
        };
        let step = 1e-5;
        for (which, &id) in nodes.ids().iter().enumerate() {
            let analytic = grads.get(id, &tape);
            for entry in 0..analytic.data().len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                field(&mut plus, which).data_mut()[entry] += step;
                field(&mut minus, which).data_mut()[entry] -= step;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
                let a = analytic.data()[entry];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
                assert!(rel <= 1e-6, "field {which} entry {entry}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn all_zero_weights_embed_to_zero() {
        let params = EmbeddingParams::zeros(2, 2, 3, 4);
        let z = embed_patient_values(
            &params,
            &record(Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(), vec![0.3, 0.4]),
        )
        .unwrap();
        assert_eq!(z.rows(), 3);
        assert_eq!(z.cols(), 4);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_shape_is_f_plus_one_by_d() {
        let mut rng = SeededRng::new(9);
        let params = EmbeddingParams::init(4, 2, 5, 3, &mut rng);
        let dynamic = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.6, 0.7, 0.8]])
            .unwrap();
        let z = embed_patient_values(&params, &record(dynamic, vec![1.0, -1.0])).unwrap();
        assert_eq!((z.rows(), z.cols()), (5, 3));
    }

    #[test]
    fn embeddings_are_non_negative_and_deterministic() {
        let mut rng = SeededRng::new(41);
        let params = EmbeddingParams::init(3, 1, 4, 4, &mut rng);
        let dynamic =
            Matrix::from_rows(&[vec![0.5, -0.5, 2.0], vec![1.5, 0.0, -1.0]]).unwrap();
        let r = record(dynamic, vec![0.7]);
        let a = embed_patient_values(&params, &r).unwrap();
        let b = embed_patient_values(&params, &r).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v >= 0.0));
        assert!(a.data().iter().any(|&v| v > 0.0), "embedding should not be degenerate");
    }

    #[test]
    fn perturbing_one_series_only_moves_its_row() {
        let mut rng = SeededRng::new(77);
        let params = EmbeddingParams::init(3, 1, 4, 4, &mut rng);
        let base = record(
            Matrix::from_rows(&[vec![0.5, -0.5, 2.0], vec![1.5, 0.0, -1.0]]).unwrap(),
            vec![0.7],
        );
        let mut bumped = base.clone();
        bumped.dynamic.set(0, 1, 3.0);
        bumped.dynamic.set(1, 1, -2.0);
        let za = embed_patient_values(&params, &base).unwrap();
        let zb = embed_patient_values(&params, &bumped).unwrap();
        for row in [0, 2, 3] {
            assert_eq!(za.row(row), zb.row(row), "row {row} should be isolated");
        }
        assert_ne!(za.row(1), zb.row(1));
    }

    #[test]
    fn feature_count_mismatch_rejected() {
        let params = EmbeddingParams::zeros(2, 1, 3, 3);
        let r = record(Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap(), vec![0.0]);
        assert!(embed_patient_values(&params, &r).is_err());
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let mut rng = SeededRng::new(3);
        let params = EmbeddingParams::init(2, 3, 16, 8, &mut rng);
        for c in &params.channels {
            assert!(c.w_z.data().iter().all(|v| v.abs() <= 1.0));
            let bound = 1.0 / 4.0;
            assert!(c.u_z.data().iter().all(|v| v.abs() <= bound));
            assert!(c.b_z.data().iter().all(|&v| v == 0.0));
            assert!(c.b_r.data().iter().all(|&v| v == 0.0));
            assert!(c.b_h.data().iter().all(|&v| v == 0.0));
        }
        assert!(params.w_s.data().iter().all(|v| v.abs() <= 1.0 / 3.0f64.sqrt()));
        assert!(params.w_proj.data().iter().all(|v| v.abs() <= 0.25));
    }
}
