//! Adam optimizer over the model's canonical tensor list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::matrix::Matrix;

pub const BETA_1: f64 = 0.9;
pub const BETA_2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment accumulators, one slot per tensor in
/// `ModelParams::tensors` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. `grads` must follow the canonical
/// tensor order.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let mut tensors = params.tensors_mut();
    if grads.len() != tensors.len() || state.first.len() != tensors.len() {
        return Err(Error::contract(format!(
            "{} gradients for {} tensors (optimizer has {} slots)",
            grads.len(),
            tensors.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let first_correction = 1.0 - BETA_1.powi(t);
    let second_correction = 1.0 - BETA_2.powi(t);
    for (i, tensor) in tensors.iter_mut().enumerate() {
        let g = &grads[i];
        if g.rows() != tensor.rows() || g.cols() != tensor.cols() {
            return Err(Error::contract(format!(
                "gradient {i} is {}x{}, tensor is {}x{}",
                g.rows(),
                g.cols(),
                tensor.rows(),
                tensor.cols()
            )));
        }
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = tensor.data_mut();
        for ((m, v), (p, &g)) in m.iter_mut().zip(v).zip(p.iter_mut().zip(g.data())) {
            *m = BETA_1 * *m + (1.0 - BETA_1) * g;
            *v = BETA_2 * *v + (1.0 - BETA_2) * g * g;
            let m_hat = *m / first_correction;
            let v_hat = *v / second_correction;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use crate::numerics::rng::SeededRng;

    fn tiny_params() -> ModelParams {
        let dims = ModelDims {
            dynamic_features: 1,
            static_features: 1,
            hidden: 1,
            embed: 1,
            attention: 1,
        };
        let mut rng = SeededRng::new(5);
        ModelParams::init(&dims, &mut rng).unwrap()
    }

    fn unit_grads(params: &ModelParams, value: f64) -> Vec<Matrix> {
        params
            .tensors()
            .iter()
            .map(|t| Matrix::filled(t.rows(), t.cols(), value))
            .collect()
    }

    #[test]
    fn first_step_moves_by_roughly_the_learning_rate() {
        // p=1, g=1: m_hat = 1, v_hat = 1, so the update is lr/(1 + eps) ~ lr.
        let mut params = tiny_params();
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v = 1.0;
            }
        }
        let grads = unit_grads(&params, 1.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.001).unwrap();
        for t in params.tensors() {
            for &v in t.data() {
                assert!((v - 0.999).abs() < 1e-9, "got {v}");
            }
        }
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = tiny_params();
        let before = params.clone();
        let grads = unit_grads(&params, 0.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.001).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn identical_runs_take_identical_trajectories() {
        let mut a = tiny_params();
        let mut b = a.clone();
        let mut state_a = AdamState::new(&a);
        let mut state_b = AdamState::new(&b);
        let mut rng = SeededRng::new(77);
        for _ in 0..20 {
            let grads: Vec<Matrix> = a
                .tensors()
                .iter()
                .map(|t| {
                    let mut g = Matrix::zeros(t.rows(), t.cols());
                    for v in g.data_mut() {
                        *v = rng.uniform(-1.0, 1.0);
                    }
                    g
                })
                .collect();
            adam_step(&mut a, &grads, &mut state_a, 0.01).unwrap();
            adam_step(&mut b, &grads, &mut state_b, 0.01).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_count_mismatch_is_rejected() {
        let mut params = tiny_params();
        let mut state = AdamState::new(&params);
        let grads = unit_grads(&params, 1.0);
        assert!(adam_step(&mut params, &grads[1..], &mut state, 0.001).is_err());
    }

    #[test]
    fn descends_a_quadratic() {
        // Minimize (p - 3)^2 elementwise; gradient 2(p - 3).
        let mut params = tiny_params();
        let mut state = AdamState::new(&params);
        for _ in 0..2000 {
            let grads: Vec<Matrix> = params
                .tensors()
                .iter()
                .map(|t| t.map(|p| 2.0 * (p - 3.0)))
                .collect();
            adam_step(&mut params, &grads, &mut state, 0.01).unwrap();
        }
        for t in params.tensors() {
            for &v in t.data() {
                assert!((v - 3.0).abs() < 1e-3, "got {v}");
            }
        }
    }
}
