//! MedFACT: patient health representation learning with kernel-estimated
//! feature correlations, spectral feature clustering, and graph-convolutional
//! feature interaction.
//!
//! The pipeline maps each dynamic feature's time series through its own GRU,
//! aligns all feature representations with a shared projection, estimates
//! cohort-wise feature correlations with a Laplacian kernel, clusters features
//! into groups by spectral clustering, runs two GCN layers over the resulting
//! correlation graph, and predicts a binary outcome with static-query
//! attention.

pub mod correlation;
pub mod data;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod interaction;
pub mod model;
pub mod numerics;
pub mod prediction;
pub mod training;

pub use error::{Error, Result};
pub use numerics::matrix::Matrix;
pub use numerics::rng::SeededRng;
