//! Ranking metrics for binary outcomes, bootstrap uncertainty, and k-fold
//! cross-validation.
//!
//! AUROC is the Mann-Whitney statistic (ties count half), AUPRC is the
//! average-precision estimator over descending unique score thresholds, and
//! Min(P+,Se) is the best achievable min(precision, sensitivity) over those
//! thresholds.

use serde::{Deserialize, Serialize};

use crate::data::{kfold_split, preprocess, Cohort};
use crate::error::{Error, Result};
use crate::model::predict_patient;
use crate::numerics::rng::SeededRng;
use crate::training::{train, TrainConfig};

/// Prediction scores paired with ground-truth binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::contract(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.is_empty() {
            return Err(Error::contract("scored set is empty"));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::contract(format!("non-finite score {bad}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::contract(format!("label {bad} is not binary")));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Indices sorted by descending score, grouped into runs of equal scores;
    /// each run is one operating threshold.
    fn descending_runs(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].partial_cmp(&self.scores[a]).expect("finite"));
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || self.scores[order[i]] != self.scores[order[start]] {
                runs.push((start, i));
                start = i;
            }
        }
        // Re-encode runs as (positives, negatives) per threshold.
        runs.iter()
            .map(|&(s, e)| {
                let pos = order[s..e]
                    .iter()
                    .filter(|&&i| self.labels[i] == 1)
                    .count();
                (pos, e - s - pos)
            })
            .collect()
    }
}

/// (concordant + 0.5 tied) / (P * N), computed with tie-averaged ranks.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let p = set.positives();
    let n = set.negatives();
    if p == 0 || n == 0 {
        return Err(Error::MetricUndefined(format!(
            "AUROC needs both classes, got {p} positives and {n} negatives"
        )));
    }
    let total = set.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| set.scores[a].partial_cmp(&set.scores[b]).expect("finite"));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j < total && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j share the average rank of the tie run.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if set.labels[idx] == 1 {
                rank_sum += avg_rank;
            }
        }
        i = j;
    }
    let p_f = p as f64;
    Ok((rank_sum - p_f * (p_f + 1.0) / 2.0) / (p_f * n as f64))
}

/// Average precision: sum over descending unique thresholds of
/// (recall_n - recall_{n-1}) * precision_n.
pub fn auprc(set: &ScoredSet) -> Result<f64> {
    let p = set.positives();
    if p == 0 {
        return Err(Error::MetricUndefined(
            "AUPRC needs at least one positive".into(),
        ));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (pos, neg) in set.descending_runs() {
        tp += pos;
        fp += neg;
        let recall = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

/// Max over thresholds (predict positive when score >= cut) of
/// min(precision, sensitivity).
pub fn min_p_se(set: &ScoredSet) -> Result<f64> {
    let p = set.positives();
    if p == 0 {
        return Err(Error::MetricUndefined(
            "Min(P+,Se) needs at least one positive".into(),
        ));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut best: f64 = 0.0;
    for (pos, neg) in set.descending_runs() {
        tp += pos;
        fp += neg;
        let sensitivity = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        best = best.max(sensitivity.min(precision));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auroc,
    Auprc,
    MinPSe,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Auroc, Metric::Auprc, Metric::MinPSe];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::Auprc => "auprc",
            Metric::MinPSe => "min_p_se",
        }
    }

    pub fn compute(self, set: &ScoredSet) -> Result<f64> {
        match self {
            Metric::Auroc => auroc(set),
            Metric::Auprc => auprc(set),
            Metric::MinPSe => min_p_se(set),
        }
    }
}

/// Point estimate on the full set plus the sample std over bootstrap
/// resamples. Resamples where the metric is undefined (single class drawn)
/// are skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub std: f64,
    pub used: usize,
    pub skipped: usize,
}

pub fn bootstrap(
    set: &ScoredSet,
    metric: Metric,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    let point = metric.compute(set)?;
    let n = set.len();
    let mut rng = SeededRng::new(seed);
    let mut values = Vec::with_capacity(resamples);
    let mut skipped = 0;
    for _ in 0..resamples {
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.below(n);
            scores.push(set.scores[i]);
            labels.push(set.labels[i]);
        }
        let resample = ScoredSet::new(scores, labels)?;
        match metric.compute(&resample) {
            Ok(v) => values.push(v),
            Err(Error::MetricUndefined(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(BootstrapResult {
        point,
        std: sample_std(&values),
        used: values.len(),
        skipped,
    })
}

/// Sample standard deviation; 0 when fewer than two values.
fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub resamples: usize,
    pub auroc: BootstrapResult,
    pub auprc: BootstrapResult,
    pub min_p_se: BootstrapResult,
}

/// All three metrics on one scored set, with optional bootstrap stds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub auprc: f64,
    pub min_p_se: f64,
    pub bootstrap: Option<BootstrapReport>,
}

impl MetricReport {
    /// One record per metric: name, value, std, resamples.
    pub fn to_text(&self) -> String {
        let mut out = String::from("metric value std resamples\n");
        for metric in Metric::ALL {
            let value = match metric {
                Metric::Auroc => self.auroc,
                Metric::Auprc => self.auprc,
                Metric::MinPSe => self.min_p_se,
            };
            match &self.bootstrap {
                Some(b) => {
                    let r = match metric {
                        Metric::Auroc => b.auroc,
                        Metric::Auprc => b.auprc,
                        Metric::MinPSe => b.min_p_se,
                    };
                    out.push_str(&format!(
                        "{} {:.6} {:.6} {}\n",
                        metric.name(),
                        value,
                        r.std,
                        b.resamples
                    ));
                }
                None => out.push_str(&format!("{} {:.6} - -\n", metric.name(), value)),
            }
        }
        out
    }
}

/// Compute all three metrics; with `resamples` set, also bootstrap each one
/// (shared seed, so all metrics see the same resample draws).
pub fn evaluate_scores(
    set: &ScoredSet,
    resamples: Option<usize>,
    seed: u64,
) -> Result<MetricReport> {
    let report = MetricReport {
        auroc: auroc(set)?,
        auprc: auprc(set)?,
        min_p_se: min_p_se(set)?,
        bootstrap: None,
    };
    match resamples {
        None => Ok(report),
        Some(r) => Ok(MetricReport {
            bootstrap: Some(BootstrapReport {
                resamples: r,
                auroc: bootstrap(set, Metric::Auroc, r, seed)?,
                auprc: bootstrap(set, Metric::Auprc, r, seed)?,
                min_p_se: bootstrap(set, Metric::MinPSe, r, seed)?,
            }),
            ..report
        }),
    }
}

/// Per-fold metrics plus their mean and sample std across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfoldReport {
    pub folds: Vec<MetricReport>,
    pub mean: MetricTriple,
    pub std: MetricTriple,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub auroc: f64,
    pub auprc: f64,
    pub min_p_se: f64,
}

/// Train k models, each on k-1 folds with per-fold normalization statistics,
/// and evaluate on the held-out fold. Folds carry no validation split, so
/// every model trains for the full epoch budget.
pub fn kfold_evaluate(cohort: &Cohort, k: usize, config: &TrainConfig) -> Result<KfoldReport> {
    let folds = kfold_split(&cohort.labels(), k, config.seed)?;
    let seed_root = SeededRng::new(config.seed);
    let mut reports = Vec::with_capacity(k);
    for (i, test) in folds.iter().enumerate() {
        let train_indices: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let processed = preprocess(cohort, &train_indices)?;
        let mut fold_config = config.clone();
        fold_config.seed = seed_root.substream(i as u64).seed();
        let model = train(&processed, &train_indices, None, &fold_config)?;
        let mut scores = Vec::with_capacity(test.len());
        let mut labels = Vec::with_capacity(test.len());
        for &idx in test {
            let record = &processed.records[idx];
            scores.push(predict_patient(&model.params, &model.graph, record)?.y_hat);
            labels.push(record.label);
        }
        let set = ScoredSet::new(scores, labels)?;
        reports.push(evaluate_scores(&set, None, fold_config.seed)?);
    }
    let mean = MetricTriple {
        auroc: mean_of(&reports, |r| r.auroc),
        auprc: mean_of(&reports, |r| r.auprc),
        min_p_se: mean_of(&reports, |r| r.min_p_se),
    };
    let std = MetricTriple {
        auroc: std_of(&reports, |r| r.auroc),
        auprc: std_of(&reports, |r| r.auprc),
        min_p_se: std_of(&reports, |r| r.min_p_se),
    };
    Ok(KfoldReport {
        folds: reports,
        mean,
        std,
    })
}

fn mean_of(reports: &[MetricReport], f: impl Fn(&MetricReport) -> f64) -> f64 {
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

fn std_of(reports: &[MetricReport], f: impl Fn(&MetricReport) -> f64) -> f64 {
    let values: Vec<f64> = reports.iter().map(f).collect();
    sample_std(&values)
}
