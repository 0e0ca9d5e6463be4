//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// The `k` smallest eigenvalues (ascending) and their orthonormal
/// eigenvectors (as columns) of a symmetric matrix.
///
/// Sweeps cyclically over the upper triangle, rotating each off-diagonal
/// entry to zero, until the off-diagonal Frobenius norm drops below 1e-12 or
/// 100 sweeps have run.
pub fn symmetric_eigen(m: &Matrix, k: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::contract(format!(
            "eigendecomposition requires a square matrix, got {}x{}",
            n,
            m.cols()
        )));
    }
    if k > n {
        return Err(Error::contract(format!(
            "requested {k} eigenpairs from a {n}x{n} matrix"
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m.get(i, j) - m.get(j, i)).abs() > SYMMETRY_TOL {
                return Err(Error::contract(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    m.get(i, j),
                    m.get(j, i)
                )));
            }
        }
    }

    let mut a = m.clone();
    // Symmetrize exactly so rotations keep both triangles consistent.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }
    let mut v = Matrix::identity(n);

    for _sweep in 0..MAX_SWEEPS {
        if off_diag_frobenius(&a) <= OFF_DIAG_TOL {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A <- J^T A J on rows/cols p and q.
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for j in 0..n {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, c * apj - s * aqj);
                    a.set(q, j, s * apj + c * aqj);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());

    let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, k);
    for (col, &src) in order[..k].iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok((eigenvalues, vectors))
}

fn off_diag_frobenius(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let x = a.get(i, j);
                sum += x * x;
            }
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual_inf(m: &Matrix, lambda: f64, v_col: &[f64]) -> f64 {
        let n = m.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut mv = 0.0;
            for j in 0..n {
                mv += m.get(i, j) * v_col[j];
            }
            worst = worst.max((mv - lambda * v_col[i]).abs());
        }
        worst
    }

    fn column(v: &Matrix, c: usize) -> Vec<f64> {
        (0..v.rows()).map(|r| v.get(r, c)).collect()
    }

    #[test]
    fn diagonal_matrix_sorted_eigenvalues() {
        let m =
            Matrix::from_rows(&[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]])
                .unwrap();
        let (vals, _) = symmetric_eigen(&m, 2).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_solved() {
        // Characteristic polynomial (2-l)^2 - 1 = 0 -> l in {1, 3}.
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m, 2).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-10);
        assert!((vals[1] - 3.0).abs() < 1e-10);
        for (i, &l) in vals.iter().enumerate() {
            assert!(residual_inf(&m, l, &column(&vecs, i)) <= 1e-8);
        }
    }

    #[test]
    fn random_symmetric_residual_and_orthonormality() {
        let mut rng = crate::numerics::rng::SeededRng::new(3);
        for n in [2usize, 5, 9, 16] {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let x = rng.uniform(-2.0, 2.0);
                    m.set(i, j, x);
                    m.set(j, i, x);
                }
            }
            let (vals, vecs) = symmetric_eigen(&m, n).unwrap();
            for i in 0..n {
                assert!(
                    residual_inf(&m, vals[i], &column(&vecs, i)) <= 1e-8,
                    "residual too large for n={n}, pair {i}"
                );
            }
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = column(&vecs, i)
                        .iter()
                        .zip(column(&vecs, j))
                        .map(|(a, b)| a * b)
                        .sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() <= 1e-8);
                }
            }
            // Ascending order.
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(symmetric_eigen(&m, 1).is_err());
    }

    #[test]
    fn k_larger_than_n_rejected() {
        let m = Matrix::identity(2);
        assert!(symmetric_eigen(&m, 3).is_err());
    }
}
