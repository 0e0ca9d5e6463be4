//! Synthetic cohorts with a planted feature-group structure.
//!
//! Features in the same planted group are scaled copies of one shared AR(1)
//! latent series plus independent noise, and labels depend on the per-group
//! latent means, so both the grouping and the outcome are learnable.

use serde::{Deserialize, Serialize};

use crate::correlation::ClusterAssignment;
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::matrix::{sigmoid, Matrix};
use crate::numerics::rng::SeededRng;

const AR_COEFFICIENT: f64 = 0.8;
const LABEL_WEIGHT_NORM: f64 = 2.5;
const TARGET_POSITIVE_RATE: f64 = 0.35;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dynamic_features: usize,
    pub static_features: usize,
    pub true_groups: usize,
    pub patients: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dynamic_features == 0 {
            return Err(Error::Config("need at least one dynamic feature".into()));
        }
        if self.true_groups == 0 || self.true_groups > self.dynamic_features {
            return Err(Error::Config(format!(
                "true_groups must be in 1..={}, got {}",
                self.dynamic_features, self.true_groups
            )));
        }
        if self.patients == 0 {
            return Err(Error::Config("need at least one patient".into()));
        }
        if self.t_min == 0 || self.t_max < self.t_min {
            return Err(Error::Config(format!(
                "visit range [{}, {}] is invalid",
                self.t_min, self.t_max
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// The planted partition assigns feature f to group f mod K, so groups are
/// near-even and not index-contiguous.
pub fn planted_partition(dynamic_features: usize, true_groups: usize) -> ClusterAssignment {
    let membership: Vec<usize> = (0..dynamic_features).map(|f| f % true_groups).collect();
    ClusterAssignment::from_membership(&membership).expect("modular partition is valid")
}

/// Deterministically generate a cohort and return it with the planted
/// partition. Patient n draws from RNG substream n+1, so the cohort is
/// reproducible record-by-record; substream 0 holds cohort-level draws.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Cohort, ClusterAssignment)> {
    spec.validate()?;
    let f = spec.dynamic_features;
    let k = spec.true_groups;
    let base = SeededRng::new(spec.seed);

    let mut cohort_rng = base.substream(0);
    let scales: Vec<f64> = (0..f).map(|_| cohort_rng.uniform(0.5, 1.5)).collect();
    let mut weights: Vec<f64> = (0..k).map(|_| cohort_rng.normal()).collect();
    let norm: f64 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for w in &mut weights {
            *w *= LABEL_WEIGHT_NORM / norm;
        }
    }

    let membership = planted_partition(f, k).membership();
    let mut drawn: Vec<(Matrix, Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(spec.patients);
    for n in 0..spec.patients {
        let mut rng = base.substream(1 + n as u64);
        let t = spec.t_min + rng.below(spec.t_max - spec.t_min + 1);

        let mut latents = vec![vec![0.0; t]; k];
        for series in &mut latents {
            let mut prev = rng.normal();
            series[0] = prev;
            for slot in series.iter_mut().skip(1) {
                prev = AR_COEFFICIENT * prev + rng.normal();
                *slot = prev;
            }
        }

        let mut dynamic = Matrix::zeros(t, f);
        for (j, &scale) in scales.iter().enumerate() {
            let latent = &latents[membership[j]];
            for (ti, &l) in latent.iter().enumerate() {
                dynamic.set(ti, j, scale * l + spec.noise_std * rng.normal());
            }
        }

        let statics: Vec<f64> = (0..spec.static_features).map(|_| rng.normal()).collect();
        let group_means: Vec<f64> = latents
            .iter()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect();
        let label_uniform = rng.next_f64();
        drawn.push((dynamic, statics, group_means, label_uniform));
    }

    // Pick the intercept so the realized positive count hits the target.
    let etas: Vec<f64> = drawn
        .iter()
        .map(|(_, _, means, _)| means.iter().zip(&weights).map(|(m, w)| m * w).sum())
        .collect();
    let target = ((spec.patients as f64 * TARGET_POSITIVE_RATE).round() as usize)
        .clamp(1, spec.patients.max(2) - 1)
        .min(spec.patients);
    let positives = |b: f64| -> usize {
        drawn
            .iter()
            .zip(&etas)
            .filter(|((_, _, _, u), &eta)| *u < sigmoid(eta + b))
            .count()
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    while hi - lo > 1e-9 {
        let mid = (lo + hi) / 2.0;
        if positives(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let intercept = hi;

    let width = digits(f.saturating_sub(1)).max(2);
    let id_width = digits(spec.patients.saturating_sub(1)).max(4);
    let records: Vec<PatientRecord> = drawn
        .into_iter()
        .zip(&etas)
        .enumerate()
        .map(|(n, ((dynamic, statics, _, u), &eta))| PatientRecord {
            id: format!("p{n:0id_width$}"),
            dynamic,
            static_features: statics,
            label: (u < sigmoid(eta + intercept)) as u8,
        })
        .collect();

    let dynamic_names = (0..f).map(|i| format!("d{i:0width$}")).collect();
    let static_names = (0..spec.static_features)
        .map(|i| format!("s{i:0width$}"))
        .collect();
    let cohort = Cohort::new(records, dynamic_names, static_names)?;
    Ok((cohort, planted_partition(f, k)))
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}
