//! Label-stratified holdout and k-fold index splits.

use crate::error::{Error, Result};
use crate::numerics::rng::SeededRng;

/// Disjoint, exhaustive index sets over a cohort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// 8:1:1 stratified holdout. Needs at least 10 records so every part is
/// non-empty.
pub fn holdout_split(labels: &[u8], seed: u64) -> Result<HoldoutSplit> {
    if labels.len() < 10 {
        return Err(Error::Split(format!(
            "holdout needs at least 10 records, got {}",
            labels.len()
        )));
    }
    let sizes = apportion(labels.len(), &[0.8, 0.1, 0.1]);
    let mut parts = stratified_parts(labels, &sizes, seed)?;
    let test = parts.pop().unwrap();
    let val = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(HoldoutSplit { train, val, test })
}

/// k stratified folds; fold sizes differ by at most one, larger folds first.
pub fn kfold_split(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Split(format!("k-fold needs k >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::Split(format!(
            "cannot split {} records into {k} folds",
            labels.len()
        )));
    }
    let sizes = apportion(labels.len(), &vec![1.0; k]);
    stratified_parts(labels, &sizes, seed)
}

/// Integer part sizes proportional to `weights`, summing to `total`.
/// Largest-remainder rounding; remainder ties go to the lower index.
pub(crate) fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let weight_sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / weight_sum).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        sizes[i] += 1;
    }
    sizes
}

/// Partition indices into parts of exactly the given sizes, keeping each
/// class's share of every part as close to proportional as integers allow.
fn stratified_parts(labels: &[u8], sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    debug_assert_eq!(sizes.iter().sum::<usize>(), n);
    let mut rng = SeededRng::new(seed);
    let mut classes: Vec<Vec<usize>> = vec![
        (0..n).filter(|&i| labels[i] == 0).collect(),
        (0..n).filter(|&i| labels[i] == 1).collect(),
    ];
    classes.retain(|c| !c.is_empty());
    for class in &mut classes {
        rng.shuffle(class);
    }

    // Per-class largest-remainder counts, then move single records between
    // parts until the part totals match exactly.
    let mut counts: Vec<Vec<usize>> = classes
        .iter()
        .map(|class| apportion(class.len(), &sizes.iter().map(|&s| s as f64).collect::<Vec<_>>()))
        .collect();
    let quota = |c: usize, s: usize| classes[c].len() as f64 * sizes[s] as f64 / n as f64;
    loop {
        let totals: Vec<usize> = (0..sizes.len())
            .map(|s| counts.iter().map(|row| row[s]).sum())
            .collect();
        let Some(over) = (0..sizes.len()).find(|&s| totals[s] > sizes[s]) else {
            break;
        };
        let under = (0..sizes.len())
            .find(|&s| totals[s] < sizes[s])
            .expect("totals sum to n, a surplus implies a deficit");
        // Take from the class with the largest surplus over its real quota.
        let donor = (0..counts.len())
            .filter(|&c| counts[c][over] > 0)
            .max_by(|&a, &b| {
                let sa = counts[a][over] as f64 - quota(a, over);
                let sb = counts[b][over] as f64 - quota(b, over);
                sa.partial_cmp(&sb).unwrap().then(b.cmp(&a))
            })
            .expect("a part with surplus has a populated class");
        counts[donor][over] -= 1;
        counts[donor][under] += 1;
    }

    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (class, class_counts) in classes.iter().zip(&counts) {
        let mut offset = 0;
        for (part, &take) in parts.iter_mut().zip(class_counts) {
            part.extend_from_slice(&class[offset..offset + take]);
            offset += take;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_with_rate(n: usize, positives: usize) -> Vec<u8> {
        // Interleave so class membership is not index-contiguous.
        let mut labels = vec![0u8; n];
        let mut placed = 0;
        let mut i = 0;
        while placed < positives {
            labels[(i * 7 + 3) % n] = 1;
            placed += 1;
            i += 1;
        }
        labels
    }

    #[test]
    fn holdout_of_100_is_80_10_10() {
        let labels = labels_with_rate(100, 35);
        let split = holdout_split(&labels, 5).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.val.len(), 10);
        assert_eq!(split.test.len(), 10);
    }

    #[test]
    fn kfold_662_gives_canonical_sizes() {
        let labels = labels_with_rate(662, 120);
        let folds = kfold_split(&labels, 5, 7).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![133, 133, 132, 132, 132]);
    }

    #[test]
    fn parts_are_disjoint_and_exhaustive() {
        let labels = labels_with_rate(237, 61);
        let split = holdout_split(&labels, 11).unwrap();
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..237).collect::<Vec<_>>());

        let folds = kfold_split(&labels, 5, 11).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..237).collect::<Vec<_>>());
    }

    #[test]
    fn splits_are_stratified_within_two_points() {
        let labels = labels_with_rate(1000, 350);
        let split = holdout_split(&labels, 42).unwrap();
        for part in [&split.train, &split.val, &split.test] {
            let rate =
                part.iter().filter(|&&i| labels[i] == 1).count() as f64 / part.len() as f64;
            assert!((rate - 0.35).abs() <= 0.02, "rate {rate}");
        }
        for fold in kfold_split(&labels, 5, 42).unwrap() {
            let rate =
                fold.iter().filter(|&&i| labels[i] == 1).count() as f64 / fold.len() as f64;
            assert!((rate - 0.35).abs() <= 0.02, "rate {rate}");
        }
    }

    #[test]
    fn same_seed_reproduces_split() {
        let labels = labels_with_rate(150, 40);
        assert_eq!(holdout_split(&labels, 3).unwrap(), holdout_split(&labels, 3).unwrap());
        assert_ne!(
            holdout_split(&labels, 3).unwrap(),
            holdout_split(&labels, 4).unwrap()
        );
    }

    #[test]
    fn undersized_inputs_are_split_errors() {
        let labels = labels_with_rate(9, 3);
        assert!(matches!(holdout_split(&labels, 0), Err(Error::Split(_))));
        let labels = labels_with_rate(4, 2);
        assert!(matches!(kfold_split(&labels, 5, 0), Err(Error::Split(_))));
    }

    #[test]
    fn apportion_spreads_remainder_to_leading_ties() {
        assert_eq!(apportion(662, &[1.0; 5]), vec![133, 133, 132, 132, 132]);
        assert_eq!(apportion(100, &[0.8, 0.1, 0.1]), vec![80, 10, 10]);
        assert_eq!(apportion(0, &[1.0, 1.0]), vec![0, 0]);
    }
}
