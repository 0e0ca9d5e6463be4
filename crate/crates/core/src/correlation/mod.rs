//! Feature-correlation estimation, spectral feature clustering, and
//! correlation-graph construction.

mod cluster;
mod graph;
mod kernel;

pub use cluster::{
    adjusted_rand_index, between_group_correlation, spectral_cluster, ClusterAssignment,
};
pub use graph::{build_graph, clu_minus_graph, cor_minus_graph};
pub use kernel::{estimate_correlations, laplacian_kernel, Bandwidth, KernelConfig};
