//! Imputation and z-scoring with statistics fit on the training split only.

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    /// Population standard deviation of observed values, floored at 1e-6.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub dynamic: Vec<FeatureStats>,
    pub statics: Vec<FeatureStats>,
}

/// Mean and floored standard deviation of the observed (non-NaN) values of
/// every feature, over the training-split patients only.
pub fn fit_stats(cohort: &Cohort, train_indices: &[usize]) -> Result<NormalizationStats> {
    if train_indices.is_empty() {
        return Err(Error::contract("training index set is empty"));
    }
    for &i in train_indices {
        if i >= cohort.len() {
            return Err(Error::contract(format!(
                "training index {i} out of range for cohort of {}",
                cohort.len()
            )));
        }
    }

    let f = cohort.feature_count();
    let s = cohort.static_count();
    let mut dyn_acc = vec![RunningStats::default(); f];
    let mut stat_acc = vec![RunningStats::default(); s];
    for &i in train_indices {
        let record = &cohort.records[i];
        for t in 0..record.visit_count() {
            for (j, v) in record.dynamic.row(t).iter().enumerate() {
                dyn_acc[j].push(*v);
            }
        }
        for (j, v) in record.static_features.iter().enumerate() {
            stat_acc[j].push(*v);
        }
    }

    let finish = |acc: &RunningStats, name: &str| -> Result<FeatureStats> {
        if acc.count == 0 {
            return Err(Error::Preprocess(format!(
                "feature {name} has no observed values in the training split"
            )));
        }
        Ok(FeatureStats {
            mean: acc.mean(),
            std: acc.population_std().max(STD_FLOOR),
        })
    };
    let dynamic = dyn_acc
        .iter()
        .zip(&cohort.dynamic_names)
        .map(|(acc, name)| finish(acc, name))
        .collect::<Result<_>>()?;
    let statics = stat_acc
        .iter()
        .zip(&cohort.static_names)
        .map(|(acc, name)| finish(acc, name))
        .collect::<Result<_>>()?;
    Ok(NormalizationStats { dynamic, statics })
}

/// Forward-fill each dynamic series, fill what remains (and missing statics)
/// with the stored means, then z-score everything.
pub fn apply_normalization(cohort: &Cohort, stats: &NormalizationStats) -> Result<Cohort> {
    if stats.dynamic.len() != cohort.feature_count()
        || stats.statics.len() != cohort.static_count()
    {
        return Err(Error::contract(format!(
            "normalization stats cover {}+{} features, cohort has {}+{}",
            stats.dynamic.len(),
            stats.statics.len(),
            cohort.feature_count(),
            cohort.static_count()
        )));
    }
    let mut out = cohort.clone();
    for record in &mut out.records {
        let t_len = record.visit_count();
        for (j, fs) in stats.dynamic.iter().enumerate() {
            let mut last = f64::NAN;
            for t in 0..t_len {
                let mut v = record.dynamic.get(t, j);
                if v.is_nan() {
                    v = last;
                }
                if v.is_nan() {
                    v = fs.mean;
                } else {
                    last = v;
                }
                record.dynamic.set(t, j, (v - fs.mean) / fs.std);
            }
        }
        for (v, fs) in record.static_features.iter_mut().zip(&stats.statics) {
            let filled = if v.is_nan() { fs.mean } else { *v };
            *v = (filled - fs.mean) / fs.std;
        }
    }
    out.normalization = Some(stats.clone());
    Ok(out)
}

/// Fit on the training indices, then normalize the whole cohort.
pub fn preprocess(cohort: &Cohort, train_indices: &[usize]) -> Result<Cohort> {
    let stats = fit_stats(cohort, train_indices)?;
    apply_normalization(cohort, &stats)
}

#[derive(Clone, Default)]
struct RunningStats {
    count: usize,
    sum: f64,
    sum_sq: f64,
}

impl RunningStats {
    fn push(&mut self, v: f64) {
        if v.is_nan() {
            return;
        }
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn population_std(&self) -> f64 {
        let mean = self.mean();
        (self.sum_sq / self.count as f64 - mean * mean).max(0.0).sqrt()
    }
}
