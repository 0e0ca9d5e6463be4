//! Cohort loading, synthesis, preprocessing, and splitting.

mod preprocess;
mod psv;
mod schema;
mod split;
mod synthetic;

pub use preprocess::{apply_normalization, fit_stats, preprocess, FeatureStats, NormalizationStats};
pub use psv::{load_cohort, write_cohort, LoadOutcome};
pub use schema::SchemaConfig;
pub use split::{holdout_split, kfold_split, HoldoutSplit};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// One patient: a T x F visit matrix, a static vector, and a binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// Rows are visits in time order, columns are dynamic features.
    pub dynamic: Matrix,
    pub static_features: Vec<f64>,
    pub label: u8,
}

impl PatientRecord {
    pub fn visit_count(&self) -> usize {
        self.dynamic.rows()
    }
}

/// A set of patients sharing one feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub dynamic_names: Vec<String>,
    pub static_names: Vec<String>,
    /// Present once the cohort has been normalized.
    pub normalization: Option<NormalizationStats>,
}

impl Cohort {
    pub fn new(
        records: Vec<PatientRecord>,
        dynamic_names: Vec<String>,
        static_names: Vec<String>,
    ) -> Result<Self> {
        let f = dynamic_names.len();
        let s = static_names.len();
        for r in &records {
            if r.dynamic.cols() != f {
                return Err(Error::contract(format!(
                    "patient {} has {} dynamic features, cohort has {f}",
                    r.id,
                    r.dynamic.cols()
                )));
            }
            if r.static_features.len() != s {
                return Err(Error::contract(format!(
                    "patient {} has {} static features, cohort has {s}",
                    r.id,
                    r.static_features.len()
                )));
            }
            if r.label > 1 {
                return Err(Error::contract(format!(
                    "patient {} has non-binary label {}",
                    r.id, r.label
                )));
            }
            if r.visit_count() == 0 {
                return Err(Error::contract(format!("patient {} has no visits", r.id)));
            }
        }
        Ok(Cohort {
            records,
            dynamic_names,
            static_names,
            normalization: None,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.dynamic_names.len()
    }

    pub fn static_count(&self) -> usize {
        self.static_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let pos = self.records.iter().filter(|r| r.label == 1).count();
        pos as f64 / self.records.len() as f64
    }
}
