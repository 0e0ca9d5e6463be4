//! Correlation-graph adjacency over F dynamic features plus one static node.

use crate::correlation::ClusterAssignment;
use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// (F+1)x(F+1) adjacency, static node last: same-group dynamic pairs carry
/// their correlation, every dynamic node links to the static node with
/// weight 1, every node has a unit self-loop, and everything else is 0.
pub fn build_graph(r: &Matrix, assignment: &ClusterAssignment) -> Result<Matrix> {
    let f = r.rows();
    if r.cols() != f {
        return Err(Error::contract(format!(
            "correlation matrix must be square, got {f}x{}",
            r.cols()
        )));
    }
    if assignment.feature_count() != f {
        return Err(Error::contract(format!(
            "assignment covers {} features, correlation matrix has {f}",
            assignment.feature_count()
        )));
    }
    let membership = assignment.membership();
    let mut a = Matrix::zeros(f + 1, f + 1);
    for i in 0..f {
        a.set(i, i, 1.0);
        for j in (i + 1)..f {
            if membership[i] == membership[j] {
                a.set(i, j, r.get(i, j));
                a.set(j, i, r.get(j, i));
            }
        }
        a.set(i, f, 1.0);
        a.set(f, i, 1.0);
    }
    a.set(f, f, 1.0);
    Ok(a)
}

/// Correlation-free ablation: fully connected, all edge weights 1.
pub fn cor_minus_graph(f: usize) -> Matrix {
    Matrix::filled(f + 1, f + 1, 1.0)
}

/// Clustering-free ablation: the dynamic block is R itself, with unit static
/// row/column and unit diagonal.
pub fn clu_minus_graph(r: &Matrix) -> Result<Matrix> {
    let f = r.rows();
    if r.cols() != f {
        return Err(Error::contract(format!(
            "correlation matrix must be square, got {f}x{}",
            r.cols()
        )));
    }
    let mut a = Matrix::filled(f + 1, f + 1, 1.0);
    for i in 0..f {
        for j in 0..f {
            a.set(i, j, if i == j { 1.0 } else { r.get(i, j) });
        }
    }
    Ok(a)
}
