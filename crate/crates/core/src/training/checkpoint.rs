//! Self-describing model checkpoints.
//!
//! A checkpoint is one JSON document holding everything needed to score new
//! patients: parameters, the final correlation matrix, assignment and graph,
//! the training configuration, and the normalization statistics the model was
//! trained under.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlation::ClusterAssignment;
use crate::data::NormalizationStats;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::matrix::Matrix;
use crate::training::trainer::{TrainConfig, TrainedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    /// Dynamic and static feature names in model column order.
    pub dynamic_names: Vec<String>,
    pub static_names: Vec<String>,
    pub params: ModelParams,
    pub correlations: Matrix,
    pub assignment: ClusterAssignment,
    pub graph: Matrix,
    /// Statistics used to normalize training data; apply the same ones to
    /// anything scored against this checkpoint.
    pub normalization: Option<NormalizationStats>,
}

impl Checkpoint {
    pub fn from_model(
        model: &TrainedModel,
        config: &TrainConfig,
        dynamic_names: Vec<String>,
        static_names: Vec<String>,
        normalization: Option<NormalizationStats>,
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            dynamic_names,
            static_names,
            params: model.params.clone(),
            correlations: model.correlations.clone(),
            assignment: model.assignment.clone(),
            graph: model.graph.clone(),
            normalization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} not supported (this build reads version {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let f = self.params.dims().dynamic_features;
        if self.dynamic_names.len() != f {
            return Err(Error::Checkpoint(format!(
                "{} dynamic feature names for {f} model features",
                self.dynamic_names.len()
            )));
        }
        if self.static_names.len() != self.params.dims().static_features {
            return Err(Error::Checkpoint(format!(
                "{} static feature names for {} model features",
                self.static_names.len(),
                self.params.dims().static_features
            )));
        }
        if self.assignment.feature_count() != f {
            return Err(Error::Checkpoint(format!(
                "assignment covers {} features, parameters have {f}",
                self.assignment.feature_count()
            )));
        }
        if self.correlations.rows() != f || self.correlations.cols() != f {
            return Err(Error::Checkpoint(format!(
                "correlation matrix is {}x{}, expected {f}x{f}",
                self.correlations.rows(),
                self.correlations.cols()
            )));
        }
        if self.graph.rows() != f + 1 || self.graph.cols() != f + 1 {
            return Err(Error::Checkpoint(format!(
                "graph is {}x{}, expected {}x{}",
                self.graph.rows(),
                self.graph.cols(),
                f + 1,
                f + 1
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;
        fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)?;
        let checkpoint: Checkpoint = serde_json::from_str(&body).map_err(|e| {
            Error::Checkpoint(format!("cannot parse {}: {e}", path.display()))
        })?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }
}
