//! Normalized-cut spectral clustering of features and partition utilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::eigen::symmetric_eigen;
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;

const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERATIONS: usize = 100;

/// A partition of the dynamic features into K disjoint non-empty groups.
/// Groups are stored sorted, ordered by their smallest member, so equal
/// partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    groups: Vec<Vec<usize>>,
    feature_count: usize,
}

impl ClusterAssignment {
    pub fn new(mut groups: Vec<Vec<usize>>, feature_count: usize) -> Result<Self> {
        groups.retain(|g| !g.is_empty());
        if groups.is_empty() {
            return Err(Error::contract("partition has no groups"));
        }
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_by_key(|g| g[0]);
        let mut seen = vec![false; feature_count];
        for &f in groups.iter().flatten() {
            if f >= feature_count {
                return Err(Error::contract(format!(
                    "feature index {f} out of range for {feature_count} features"
                )));
            }
            if seen[f] {
                return Err(Error::contract(format!("feature {f} appears in two groups")));
            }
            seen[f] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::contract("partition does not cover every feature"));
        }
        Ok(ClusterAssignment {
            groups,
            feature_count,
        })
    }

    /// Build from a feature -> cluster-id map; ids need not be dense.
    pub fn from_membership(membership: &[usize]) -> Result<Self> {
        let k = membership.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        for (f, &c) in membership.iter().enumerate() {
            groups[c].push(f);
        }
        ClusterAssignment::new(groups, membership.len())
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// feature -> group index (in canonical group order).
    pub fn membership(&self) -> Vec<usize> {
        let mut m = vec![0; self.feature_count];
        for (g, group) in self.groups.iter().enumerate() {
            for &f in group {
                m[f] = g;
            }
        }
        m
    }

    pub fn same_group(&self, i: usize, j: usize) -> bool {
        let m = self.membership();
        m[i] == m[j]
    }
}

/// Sum of correlations between features in different groups, over ordered
/// group pairs. This is the quantity the clustering step minimizes.
pub fn between_group_correlation(r: &Matrix, assignment: &ClusterAssignment) -> f64 {
    let membership = assignment.membership();
    let f = assignment.feature_count();
    let mut total = 0.0;
    for i in 0..f {
        for j in 0..f {
            if i != j && membership[i] != membership[j] {
                total += r.get(i, j);
            }
        }
    }
    total
}

/// Cluster features by the K smallest eigenvectors of the normalized
/// Laplacian of R, then k-means with k-means++ seeding, 10 restarts of up to
/// 100 iterations, keeping the lowest within-cluster sum of squares.
pub fn spectral_cluster(r: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let f = r.rows();
    if r.cols() != f {
        return Err(Error::contract(format!(
            "correlation matrix must be square, got {}x{}",
            f,
            r.cols()
        )));
    }
    if k == 0 || k > f {
        return Err(Error::contract(format!(
            "cluster count must be in 1..={f}, got {k}"
        )));
    }
    if k == 1 {
        return ClusterAssignment::new(vec![(0..f).collect()], f);
    }

    // L = I - D^{-1/2} R D^{-1/2} with D the diagonal of row sums.
    let mut inv_sqrt_degree = vec![0.0; f];
    for i in 0..f {
        let d: f64 = r.row(i).iter().sum();
        if d <= 0.0 {
            return Err(Error::contract(format!(
                "row {i} of the correlation matrix has non-positive sum {d}"
            )));
        }
        inv_sqrt_degree[i] = 1.0 / d.sqrt();
    }
    let mut laplacian = Matrix::zeros(f, f);
    for i in 0..f {
        for j in 0..f {
            let normalized = inv_sqrt_degree[i] * r.get(i, j) * inv_sqrt_degree[j];
            let v = if i == j { 1.0 - normalized } else { -normalized };
            laplacian.set(i, j, v);
        }
    }

    let (_, mut points) = symmetric_eigen(&laplacian, k)?;
    for i in 0..f {
        let norm: f64 = (0..k).map(|j| points.get(i, j).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for j in 0..k {
                points.set(i, j, points.get(i, j) / norm);
            }
        }
    }

    let mut rng = SeededRng::new(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (wcss, membership) = kmeans_once(&points, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| wcss < *b) {
            best = Some((wcss, membership));
        }
    }
    ClusterAssignment::from_membership(&best.expect("at least one restart ran").1)
}

/// One seeded k-means run; returns (wcss, membership).
fn kmeans_once(points: &Matrix, k: usize, rng: &mut SeededRng) -> (f64, Vec<usize>) {
    let n = points.rows();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut membership = vec![0usize; n];
    for _ in 0..KMEANS_ITERATIONS {
        // Assign, ties to the lowest cluster index.
        let mut changed = false;
        for p in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_distance(points.row(p), centroid);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            if membership[p] != best_c {
                membership[p] = best_c;
                changed = true;
            }
        }

        // Repair empty clusters with the point farthest from its centroid.
        for c in 0..k {
            if membership.iter().any(|&m| m == c) {
                continue;
            }
            let farthest = (0..n)
                .max_by(|&a, &b| {
                    let da = sq_distance(points.row(a), &centroids[membership[a]]);
                    let db = sq_distance(points.row(b), &centroids[membership[b]]);
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("clustering at least one point");
            membership[farthest] = c;
            changed = true;
        }

        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&p| membership[p] == c).collect();
            for (j, slot) in centroid.iter_mut().enumerate() {
                *slot = members.iter().map(|&p| points.get(p, j)).sum::<f64>()
                    / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let wcss = (0..n)
        .map(|p| sq_distance(points.row(p), &centroids[membership[p]]))
        .sum();
    (wcss, membership)
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the nearest chosen one.
fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points.row(rng.below(n)).to_vec());
    let mut nearest: Vec<f64> = (0..n)
        .map(|p| sq_distance(points.row(p), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut pick = n - 1;
            for (p, &d) in nearest.iter().enumerate() {
                if target < d {
                    pick = p;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All points coincide with a centroid already.
            rng.below(n)
        };
        centroids.push(points.row(chosen).to_vec());
        for p in 0..n {
            nearest[p] = nearest[p].min(sq_distance(points.row(p), centroids.last().unwrap()));
        }
    }
    centroids
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Adjusted Rand index between two partitions of the same features. The
/// degenerate case where the chance-model denominator vanishes (both
/// partitions trivial) returns 1.
pub fn adjusted_rand_index(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    if a.feature_count() != b.feature_count() {
        return Err(Error::contract(format!(
            "partitions cover {} and {} features",
            a.feature_count(),
            b.feature_count()
        )));
    }
    let n = a.feature_count();
    let ma = a.membership();
    let mb = b.membership();
    let mut contingency = vec![vec![0usize; b.k()]; a.k()];
    for f in 0..n {
        contingency[ma[f]][mb[f]] += 1;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = contingency.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = a.groups.iter().map(|g| choose2(g.len())).sum();
    let sum_b: f64 = b.groups.iter().map(|g| choose2(g.len())).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max - expected))
}
