//! Laplacian-kernel feature correlation estimated over a patient sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Kernel bandwidth: fixed, or the median of the pairwise feature distances
/// observed in the sample being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Largest number of patients used for one estimation pass.
    pub sample_cap: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: Bandwidth::Median,
            sample_cap: 2048,
        }
    }
}

/// exp(-||x - y||_1 / sigma), in (0, 1].
pub fn laplacian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if sigma <= 0.0 {
        return Err(Error::contract(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    Ok((-l1 / sigma).exp())
}

/// Mean kernel similarity between every unordered pair of feature rows,
/// averaged over the sampled patients. Each matrix in `embeddings` holds one
/// patient's F feature embeddings as rows; all matrices must share a shape.
/// The result is symmetric with a unit diagonal.
pub fn estimate_correlations(embeddings: &[Matrix], bandwidth: Bandwidth) -> Result<Matrix> {
    let Some(first) = embeddings.first() else {
        return Err(Error::contract("correlation sample is empty"));
    };
    let f = first.rows();
    for z in embeddings {
        if z.rows() != f || z.cols() != first.cols() {
            return Err(Error::contract(format!(
                "embedding shapes differ: {}x{} vs {}x{}",
                z.rows(),
                z.cols(),
                first.rows(),
                first.cols()
            )));
        }
        if !z.all_finite() {
            return Err(Error::contract(
                "correlation sample contains non-finite embedding values",
            ));
        }
    }

    // One distance per patient per unordered pair, reused for the median
    // heuristic and the kernel means.
    let pair_count = f * (f - 1) / 2;
    let mut distances = vec![0.0; embeddings.len() * pair_count];
    let mut cursor = 0;
    for z in embeddings {
        for i in 0..f {
            for j in (i + 1)..f {
                let l1: f64 = z
                    .row(i)
                    .iter()
                    .zip(z.row(j))
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                distances[cursor] = l1;
                cursor += 1;
            }
        }
    }

    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => {
            if s <= 0.0 {
                return Err(Error::contract(format!(
                    "kernel bandwidth must be positive, got {s}"
                )));
            }
            s
        }
        Bandwidth::Median => {
            // An all-zero sample (identical embeddings) has median 0; any
            // positive bandwidth then gives the same all-ones correlations.
            let m = median(&mut distances.clone());
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };

    let mut r = Matrix::identity(f);
    let n = embeddings.len() as f64;
    let mut pair = 0;
    for i in 0..f {
        for j in (i + 1)..f {
            let mut acc = 0.0;
            for p in 0..embeddings.len() {
                acc += (-distances[p * pair_count + pair] / sigma).exp();
            }
            let value = acc / n;
            r.set(i, j, value);
            r.set(j, i, value);
            pair += 1;
        }
    }
    Ok(r)
}

/// Median with the even-count convention of averaging the two middle values.
fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *upper;
    if values.len() % 2 == 1 {
        upper
    } else {
        let (_, lower, _) = values.select_nth_unstable_by(mid - 1, |a, b| a.total_cmp(b));
        (upper + *lower) / 2.0
    }
}
