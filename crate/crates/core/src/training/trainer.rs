//! The training schedule: mini-batch Adam with interleaved correlation
//! re-estimation and feature re-clustering during the opening fraction of
//! epochs, after which the correlation graph is frozen.
//!
//! One epoch runs shuffled mini-batches, then (while still in the clustering
//! phase) re-estimates R from current embeddings over the training split,
//! re-clusters, and rebuilds the graph; validation metrics are computed
//! against the state the next epoch will actually use. Early stopping tracks
//! validation AUPRC and returns a coherent snapshot of parameters, R,
//! assignment, and graph from the best epoch.

use serde::{Deserialize, Serialize};

use crate::correlation::{
    build_graph, clu_minus_graph, cor_minus_graph, estimate_correlations, spectral_cluster,
    ClusterAssignment, KernelConfig,
};
use crate::data::Cohort;
use crate::embedding::embed_patient_values;
use crate::error::{Error, Result};
use crate::evaluation::{auprc, auroc, ScoredSet};
use crate::model::{batch_loss, predict_patient, ModelDims, ModelParams};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::SeededRng;
use crate::numerics::tape::Tape;
use crate::training::adam::{adam_step, AdamState};

/// Graph ablations: `CorMinus` drops correlation weights (all-ones graph),
/// `CluMinus` drops clustering (fully connected, weighted by R).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "cor-")]
    CorMinus,
    #[serde(rename = "clu-")]
    CluMinus,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::CorMinus => "cor-",
            Ablation::CluMinus => "clu-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Number of feature groups; `None` resolves to round(sqrt(F)).
    pub clusters: Option<usize>,
    /// Fraction of epochs during which R, the clusters, and the graph are
    /// re-estimated; the graph is frozen afterwards.
    pub cluster_epoch_fraction: f64,
    pub ablation: Ablation,
    pub seed: u64,
    pub kernel: KernelConfig,
    /// Early-stopping patience in epochs without a validation-AUPRC
    /// improvement. Only active when a validation split is supplied.
    pub patience: usize,
    pub hidden: usize,
    pub embed: usize,
    pub attention: usize,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            clusters: None,
            cluster_epoch_fraction: 0.2,
            ablation: Ablation::Full,
            seed,
            kernel: KernelConfig::default(),
            patience: 10,
            hidden: 16,
            embed: 16,
            attention: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.cluster_epoch_fraction) {
            return Err(Error::Config(format!(
                "cluster epoch fraction must lie in [0, 1], got {}",
                self.cluster_epoch_fraction
            )));
        }
        if self.clusters == Some(0) {
            return Err(Error::Config("cluster count must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.hidden == 0 || self.embed == 0 || self.attention == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// The configured cluster count, defaulting to round(sqrt(F)).
    pub fn resolve_clusters(&self, feature_count: usize) -> usize {
        self.clusters
            .unwrap_or_else(|| ((feature_count as f64).sqrt().round() as usize).max(1))
    }

    pub fn dims(&self, cohort: &Cohort) -> ModelDims {
        ModelDims {
            dynamic_features: cohort.feature_count(),
            static_features: cohort.static_count(),
            hidden: self.hidden,
            embed: self.embed,
            attention: self.attention,
        }
    }
}

/// Epochs with graph updates: ceil(fraction * epochs), at least 1 whenever
/// the fraction is positive. The small slack absorbs float error in the
/// product (0.2 of 30 epochs must give exactly 6).
pub fn cluster_epochs(fraction: f64, epochs: usize) -> usize {
    if fraction <= 0.0 || epochs == 0 {
        return 0;
    }
    let raw = (fraction * epochs as f64 - 1e-9).ceil() as usize;
    raw.clamp(1, epochs)
}

/// One epoch's record in the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss per patient over the epoch's batches.
    pub train_loss: f64,
    pub val_auroc: Option<f64>,
    pub val_auprc: Option<f64>,
    /// Whether this epoch ended with a graph re-estimation.
    pub reclustered: bool,
    /// Assignment in effect after this epoch.
    pub assignment: ClusterAssignment,
    /// Graph in effect after this epoch.
    pub graph: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub correlations: Matrix,
    pub assignment: ClusterAssignment,
    pub graph: Matrix,
    pub history: Vec<EpochRecord>,
    /// Epoch whose snapshot was returned; `None` when no validation split
    /// drove early stopping (the final state is returned).
    pub best_epoch: Option<usize>,
}

struct Snapshot {
    params: ModelParams,
    correlations: Matrix,
    assignment: ClusterAssignment,
    graph: Matrix,
    epoch: usize,
    val_auprc: f64,
}

/// Seeded partition of the features into `k` near-equal groups.
fn random_balanced_partition(
    feature_count: usize,
    k: usize,
    rng: &mut SeededRng,
) -> Result<ClusterAssignment> {
    let mut order: Vec<usize> = (0..feature_count).collect();
    rng.shuffle(&mut order);
    let base = feature_count / k;
    let extra = feature_count % k;
    let mut groups = Vec::with_capacity(k);
    let mut cursor = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        groups.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    ClusterAssignment::new(groups, feature_count)
}

fn check_indices(name: &str, indices: &[usize], len: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::contract(format!("{name} split is empty")));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
        return Err(Error::contract(format!(
            "{name} index {bad} out of range for {len} records"
        )));
    }
    Ok(())
}

fn check_finite(cohort: &Cohort, indices: &[usize]) -> Result<()> {
    for &i in indices {
        let r = &cohort.records[i];
        if !r.dynamic.all_finite() || r.static_features.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "record {} contains non-finite values; preprocess the cohort first",
                r.id
            )));
        }
    }
    Ok(())
}

/// Deterministic correlation sample: the whole training split when it fits
/// under the cap, otherwise a seeded subsample (sorted for a stable
/// accumulation order).
fn correlation_sample(train: &[usize], cap: usize, rng: &mut SeededRng) -> Vec<usize> {
    if train.len() <= cap {
        return train.to_vec();
    }
    let mut pool = train.to_vec();
    rng.shuffle(&mut pool);
    pool.truncate(cap);
    pool.sort_unstable();
    pool
}

/// Re-estimate R from the current embeddings of the sampled training
/// patients. The static row of each embedding is excluded; correlations are
/// between dynamic features only.
fn estimate_training_correlations(
    cohort: &Cohort,
    sample: &[usize],
    params: &ModelParams,
    kernel: &KernelConfig,
    at: (usize, usize),
) -> Result<Matrix> {
    let f = cohort.feature_count();
    let mut embeddings = Vec::with_capacity(sample.len());
    for &i in sample {
        let z = embed_patient_values(&params.embedding, &cohort.records[i])?;
        if !z.all_finite() {
            // Finite parameters can still overflow in the forward pass; the
            // run is lost either way.
            return Err(Error::Divergence {
                epoch: at.0,
                batch: at.1,
                message: format!(
                    "patient {} embeds to non-finite values",
                    cohort.records[i].id
                ),
            });
        }
        embeddings.push(z.slice_rows(0, f)?);
    }
    estimate_correlations(&embeddings, kernel.bandwidth)
}

fn validation_scores(
    cohort: &Cohort,
    indices: &[usize],
    params: &ModelParams,
    graph: &Matrix,
    at: (usize, usize),
) -> Result<ScoredSet> {
    let mut scores = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let record = &cohort.records[i];
        let y_hat = predict_patient(params, graph, record)?.y_hat;
        if !y_hat.is_finite() {
            return Err(Error::Divergence {
                epoch: at.0,
                batch: at.1,
                message: format!("validation prediction for patient {} is {y_hat}", record.id),
            });
        }
        scores.push(y_hat);
        labels.push(record.label);
    }
    ScoredSet::new(scores, labels)
}

/// Train on `train_indices`, optionally early-stopping against
/// `val_indices`. The cohort must already be preprocessed; correlation
/// estimation only ever sees training patients.
pub fn train(
    cohort: &Cohort,
    train_indices: &[usize],
    val_indices: Option<&[usize]>,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    check_indices("training", train_indices, cohort.len())?;
    if let Some(val) = val_indices {
        check_indices("validation", val, cohort.len())?;
        check_finite(cohort, val)?;
    }
    check_finite(cohort, train_indices)?;

    let f = cohort.feature_count();
    let k = config.resolve_clusters(f);
    if k > f {
        return Err(Error::Config(format!(
            "cluster count {k} exceeds the {f} dynamic features"
        )));
    }

    let root = SeededRng::new(config.seed);
    let mut init_rng = root.substream(0);
    let mut partition_rng = root.substream(1);
    let mut shuffle_rng = root.substream(2);
    let mut sample_rng = root.substream(3);
    let mut cluster_seed_rng = root.substream(4);

    let mut params = ModelParams::init(&config.dims(cohort), &mut init_rng)?;
    let mut adam = AdamState::new(&params);

    // Opening state: R all ones; groups random and balanced for the full
    // model, a single group under the ablations (their graphs ignore
    // grouping).
    let mut correlations = Matrix::filled(f, f, 1.0);
    let mut assignment = match config.ablation {
        Ablation::Full => random_balanced_partition(f, k, &mut partition_rng)?,
        Ablation::CorMinus | Ablation::CluMinus => {
            ClusterAssignment::new(vec![(0..f).collect()], f)?
        }
    };
    let mut graph = match config.ablation {
        Ablation::Full => build_graph(&correlations, &assignment)?,
        Ablation::CorMinus => cor_minus_graph(f),
        Ablation::CluMinus => clu_minus_graph(&correlations)?,
    };

    let update_epochs = cluster_epochs(config.cluster_epoch_fraction, config.epochs);
    let mut history: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut best: Option<Snapshot> = None;
    let mut epochs_since_best = 0usize;

    for epoch in 0..config.epochs {
        let mut order = train_indices.to_vec();
        shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let records: Vec<_> = chunk.iter().map(|&i| &cohort.records[i]).collect();
            let mut tape = Tape::new();
            let nodes = params.stage(&mut tape);
            let a_node = tape.leaf(graph.clone());
            let loss = batch_loss(&mut tape, &nodes, &records, a_node)?;
            let loss_value = tape.value(loss).scalar()?;
            if !loss_value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_index,
                    message: format!("batch loss is {loss_value}"),
                });
            }
            loss_sum += loss_value * chunk.len() as f64;
            let grads = tape.backward(loss)?;
            let grad_tensors: Vec<Matrix> = nodes
                .tensor_ids()
                .iter()
                .map(|&id| grads.get(id, &tape))
                .collect();
            adam_step(&mut params, &grad_tensors, &mut adam, config.learning_rate)?;
            // The loss guard above misses runs whose loss stays clamped
            // while the parameters overflow; catch those here.
            if params.tensors().iter().any(|t| !t.all_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_index,
                    message: "parameters became non-finite after the update".into(),
                });
            }
        }
        let train_loss = loss_sum / train_indices.len() as f64;
        let last_batch = (train_indices.len() - 1) / config.batch_size;

        // Graph update phase: re-estimate R on the training split, re-cluster
        // (full model only), rebuild the graph. Afterwards the graph is
        // frozen.
        let mut reclustered = false;
        if epoch < update_epochs && config.ablation != Ablation::CorMinus {
            let sample =
                correlation_sample(train_indices, config.kernel.sample_cap, &mut sample_rng);
            correlations = estimate_training_correlations(
                cohort,
                &sample,
                &params,
                &config.kernel,
                (epoch, last_batch),
            )?;
            match config.ablation {
                Ablation::Full => {
                    assignment = spectral_cluster(&correlations, k, cluster_seed_rng.next_u64())?;
                    graph = build_graph(&correlations, &assignment)?;
                }
                Ablation::CluMinus => {
                    graph = clu_minus_graph(&correlations)?;
                }
                Ablation::CorMinus => unreachable!(),
            }
            reclustered = true;
        }

        let (mut val_auroc, mut val_auprc) = (None, None);
        if let Some(val) = val_indices {
            let scored = validation_scores(cohort, val, &params, &graph, (epoch, last_batch))?;
            val_auroc = Some(auroc(&scored)?);
            val_auprc = Some(auprc(&scored)?);
        }

        history.push(EpochRecord {
            epoch,
            train_loss,
            val_auroc,
            val_auprc,
            reclustered,
            assignment: assignment.clone(),
            graph: graph.clone(),
        });

        if let Some(current) = val_auprc {
            let improved = best.as_ref().map_or(true, |b| current > b.val_auprc);
            if improved {
                best = Some(Snapshot {
                    params: params.clone(),
                    correlations: correlations.clone(),
                    assignment: assignment.clone(),
                    graph: graph.clone(),
                    epoch,
                    val_auprc: current,
                });
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= config.patience {
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some(snapshot) => TrainedModel {
            params: snapshot.params,
            correlations: snapshot.correlations,
            assignment: snapshot.assignment,
            graph: snapshot.graph,
            history,
            best_epoch: Some(snapshot.epoch),
        },
        None => TrainedModel {
            params,
            correlations,
            assignment,
            graph,
            history,
            best_epoch: None,
        },
    })
}
