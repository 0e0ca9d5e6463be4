//! Implementations of the CLI subcommands.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use medfact::correlation::{
    between_group_correlation, estimate_correlations, spectral_cluster, ClusterAssignment,
};
use medfact::data::{
    apply_normalization, fit_stats, generate_synthetic, holdout_split, load_cohort, preprocess,
    write_cohort, Cohort, LoadOutcome, SchemaConfig, SyntheticSpec,
};
use medfact::embedding::embed_patient_values;
use medfact::evaluation::{evaluate_scores, kfold_evaluate, KfoldReport, ScoredSet};
use medfact::model::predict_patient;
use medfact::training::{train, Checkpoint, TrainConfig, TrainedModel};
use medfact::{Error, Matrix, Result, SeededRng};

use crate::{
    ClusterReportArgs, EvaluateArgs, GenSyntheticArgs, KfoldArgs, OutputFormat, SweepKArgs,
    TrainArgs,
};

/// Label column name used for generated cohorts.
const SYNTHETIC_LABEL: &str = "label";

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, body + "\n")?;
    Ok(())
}

fn resolve_schema_path(data_dir: &Path, schema: &Option<PathBuf>) -> PathBuf {
    schema
        .clone()
        .unwrap_or_else(|| data_dir.join("schema.json"))
}

fn load_data(data_dir: &Path, schema_path: &Path) -> Result<LoadOutcome> {
    let schema = SchemaConfig::from_file(schema_path)?;
    load_cohort(data_dir, &schema)
}

fn report_dropped(outcome: &LoadOutcome) {
    if outcome.dropped_short > 0 {
        println!(
            "dropped {} patients with too few visits",
            outcome.dropped_short
        );
    }
}

fn groups_by_name(assignment: &ClusterAssignment, names: &[String]) -> Vec<Vec<String>> {
    assignment
        .groups()
        .iter()
        .map(|group| group.iter().map(|&f| names[f].clone()).collect())
        .collect()
}

fn ids_for(cohort: &Cohort, indices: &[usize]) -> Vec<String> {
    indices
        .iter()
        .map(|&i| cohort.records[i].id.clone())
        .collect()
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6}"),
        None => "-".into(),
    }
}

fn print_history(model: &TrainedModel) {
    for record in &model.history {
        println!(
            "epoch {:>3}  loss {:.6}  val_auroc {}  val_auprc {}{}",
            record.epoch,
            record.train_loss,
            fmt_opt(record.val_auroc),
            fmt_opt(record.val_auprc),
            if record.reclustered {
                "  [graph updated]"
            } else {
                ""
            }
        );
    }
    match model.best_epoch {
        Some(e) => println!("best epoch by validation area under PR curve: {e}"),
        None => println!("no validation split; kept the final epoch"),
    }
}

/// Patient ids of each holdout part, as written to and read from split.json.
#[derive(Serialize, Deserialize)]
struct SplitIds {
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

// ---------------------------------------------------------------------------
// gen-synthetic
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PlantedGroupsFile {
    true_groups: usize,
    groups: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct GenManifest<'a> {
    command: &'static str,
    out_dir: String,
    spec: &'a SyntheticSpec,
}

pub fn gen_synthetic(args: &GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        dynamic_features: args.dynamic_features,
        static_features: args.static_features,
        true_groups: args.true_groups,
        patients: args.patients,
        t_min: args.t_min,
        t_max: args.t_max,
        noise_std: args.noise_std,
        seed: args.seed,
    };
    let (cohort, planted) = generate_synthetic(&spec)?;
    write_cohort(&cohort, &args.out_dir, SYNTHETIC_LABEL)?;

    let schema = SchemaConfig::new(
        cohort.dynamic_names.clone(),
        cohort.static_names.clone(),
        SYNTHETIC_LABEL.into(),
    )?;
    schema.to_file(&args.out_dir.join("schema.json"))?;
    write_json(
        &args.out_dir.join("planted_groups.json"),
        &PlantedGroupsFile {
            true_groups: planted.k(),
            groups: groups_by_name(&planted, &cohort.dynamic_names),
        },
    )?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &GenManifest {
            command: "gen-synthetic",
            out_dir: args.out_dir.display().to_string(),
            spec: &spec,
        },
    )?;

    let visits: Vec<usize> = cohort.records.iter().map(|r| r.visit_count()).collect();
    let total: usize = visits.iter().sum();
    println!("wrote {} patients to {}", cohort.len(), args.out_dir.display());
    println!(
        "dynamic features: {}  static features: {}  planted groups: {}",
        cohort.feature_count(),
        cohort.static_count(),
        planted.k()
    );
    println!(
        "visits per patient: min {}  max {}  mean {:.1}",
        visits.iter().min().unwrap(),
        visits.iter().max().unwrap(),
        total as f64 / cohort.len() as f64
    );
    println!("positive rate: {:.4}", cohort.positive_fraction());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TrainManifest<'a> {
    command: &'static str,
    data_dir: String,
    schema: String,
    out_dir: String,
    config: &'a TrainConfig,
    resolved_clusters: usize,
    patients: usize,
    dropped_short: usize,
}

pub fn train_model(args: &TrainArgs) -> Result<()> {
    let config = args.flags.to_config(args.seed);
    config.validate()?;

    let schema_path = resolve_schema_path(&args.data_dir, &args.schema);
    let outcome = load_data(&args.data_dir, &schema_path)?;
    report_dropped(&outcome);
    let cohort = outcome.cohort;

    let split = holdout_split(&cohort.labels(), args.seed)?;
    let stats = fit_stats(&cohort, &split.train)?;
    let normalized = apply_normalization(&cohort, &stats)?;
    println!(
        "training on {} patients ({} train / {} val / {} test)",
        cohort.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let model = train(&normalized, &split.train, Some(&split.val), &config)?;
    print_history(&model);

    fs::create_dir_all(&args.out_dir)?;
    let checkpoint = Checkpoint::from_model(
        &model,
        &config,
        cohort.dynamic_names.clone(),
        cohort.static_names.clone(),
        Some(stats),
    );
    let checkpoint_path = args.out_dir.join("checkpoint.json");
    checkpoint.save(&checkpoint_path)?;
    write_json(&args.out_dir.join("history.json"), &model.history)?;
    write_json(
        &args.out_dir.join("split.json"),
        &SplitIds {
            train: ids_for(&cohort, &split.train),
            val: ids_for(&cohort, &split.val),
            test: ids_for(&cohort, &split.test),
        },
    )?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &TrainManifest {
            command: "train",
            data_dir: args.data_dir.display().to_string(),
            schema: schema_path.display().to_string(),
            out_dir: args.out_dir.display().to_string(),
            config: &config,
            resolved_clusters: config.resolve_clusters(cohort.feature_count()),
            patients: cohort.len(),
            dropped_short: outcome.dropped_short,
        },
    )?;
    println!("checkpoint: {}", checkpoint_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EvalManifest {
    command: &'static str,
    checkpoint: String,
    data_dir: String,
    schema: String,
    out_dir: String,
    subset: Option<String>,
    bootstrap: Option<usize>,
    seed: u64,
    patients_scored: usize,
}

fn subset_indices(cohort: &Cohort, split_file: &Path, subset: &str) -> Result<Vec<usize>> {
    let text = fs::read_to_string(split_file)?;
    let split: SplitIds = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("cannot parse {}: {e}", split_file.display())))?;
    let wanted: Vec<&String> = match subset {
        "train" => split.train.iter().collect(),
        "val" => split.val.iter().collect(),
        "test" => split.test.iter().collect(),
        "all" => split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .collect(),
        other => {
            return Err(Error::Config(format!(
                "unknown subset {other:?}; use train, val, test, or all"
            )))
        }
    };
    let by_id: HashMap<&str, usize> = cohort
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    wanted
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).copied().ok_or_else(|| {
                Error::Contract(format!(
                    "patient {id} from the split file is not in the cohort"
                ))
            })
        })
        .collect()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let schema_path = resolve_schema_path(&args.data_dir, &args.schema);
    let outcome = load_data(&args.data_dir, &schema_path)?;
    report_dropped(&outcome);
    let cohort = outcome.cohort;

    if cohort.dynamic_names != checkpoint.dynamic_names
        || cohort.static_names != checkpoint.static_names
    {
        return Err(Error::Contract(
            "cohort columns do not match the checkpoint; check the schema".into(),
        ));
    }
    let scored = match &checkpoint.normalization {
        Some(stats) => apply_normalization(&cohort, stats)?,
        None => cohort,
    };

    let indices: Vec<usize> = match &args.split_file {
        None => (0..scored.len()).collect(),
        Some(path) => subset_indices(&scored, path, &args.subset)?,
    };

    let mut scores = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in &indices {
        let record = &scored.records[i];
        let prediction = predict_patient(&checkpoint.params, &checkpoint.graph, record)?;
        scores.push(prediction.y_hat);
        labels.push(record.label);
    }
    let set = ScoredSet::new(scores, labels)?;
    let report = evaluate_scores(&set, args.bootstrap, args.seed)?;

    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("report.txt"), report.to_text())?;
    write_json(&args.out_dir.join("report.json"), &report)?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &EvalManifest {
            command: "evaluate",
            checkpoint: args.checkpoint.display().to_string(),
            data_dir: args.data_dir.display().to_string(),
            schema: schema_path.display().to_string(),
            out_dir: args.out_dir.display().to_string(),
            subset: args.split_file.as_ref().map(|_| args.subset.clone()),
            bootstrap: args.bootstrap,
            seed: args.seed,
            patients_scored: set.len(),
        },
    )?;

    match args.format {
        OutputFormat::Text => {
            println!("patients scored: {}", set.len());
            print!("{}", report.to_text());
        }
        OutputFormat::Machine => {
            let body = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
            println!("{body}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// kfold
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct KfoldManifest<'a> {
    command: &'static str,
    data_dir: String,
    schema: String,
    out_dir: String,
    folds: usize,
    config: &'a TrainConfig,
}

fn kfold_text(report: &KfoldReport) -> String {
    let mut out = String::from("fold auroc auprc min_p_se\n");
    for (i, fold) in report.folds.iter().enumerate() {
        out.push_str(&format!(
            "{i} {:.6} {:.6} {:.6}\n",
            fold.auroc, fold.auprc, fold.min_p_se
        ));
    }
    out.push_str(&format!(
        "mean {:.6} {:.6} {:.6}\n",
        report.mean.auroc, report.mean.auprc, report.mean.min_p_se
    ));
    out.push_str(&format!(
        "std {:.6} {:.6} {:.6}\n",
        report.std.auroc, report.std.auprc, report.std.min_p_se
    ));
    out
}

pub fn kfold(args: &KfoldArgs) -> Result<()> {
    let config = args.flags.to_config(args.seed);
    config.validate()?;

    let schema_path = resolve_schema_path(&args.data_dir, &args.schema);
    let outcome = load_data(&args.data_dir, &schema_path)?;
    report_dropped(&outcome);

    println!(
        "cross-validating {} patients over {} folds",
        outcome.cohort.len(),
        args.folds
    );
    let report = kfold_evaluate(&outcome.cohort, args.folds, &config)?;

    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("kfold.json"), &report)?;
    let text = kfold_text(&report);
    fs::write(args.out_dir.join("kfold.txt"), &text)?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &KfoldManifest {
            command: "kfold",
            data_dir: args.data_dir.display().to_string(),
            schema: schema_path.display().to_string(),
            out_dir: args.out_dir.display().to_string(),
            folds: args.folds,
            config: &config,
        },
    )?;

    match args.format {
        OutputFormat::Text => print!("{text}"),
        OutputFormat::Machine => {
            let body = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
            println!("{body}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-k
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepBlock {
    k: usize,
    groups: Vec<Vec<String>>,
    between_group_correlation: f64,
}

#[derive(Serialize)]
struct SweepFile {
    ks: Vec<usize>,
    retrain: bool,
    blocks: Vec<SweepBlock>,
    /// Entry i compares blocks i and i+1: the fraction of features whose
    /// group at ks[i] differs from the parent of their group at ks[i+1].
    switch_fractions: Vec<f64>,
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    command: &'static str,
    data_dir: String,
    schema: String,
    out_dir: String,
    ks: &'a [usize],
    retrain: bool,
    config: &'a TrainConfig,
}

/// Correlations from the trained embeddings over the training split,
/// subsampled to the kernel's cap like during training.
fn final_correlations(
    cohort: &Cohort,
    train_indices: &[usize],
    model: &TrainedModel,
    config: &TrainConfig,
) -> Result<Matrix> {
    let f = cohort.feature_count();
    let mut indices = train_indices.to_vec();
    if indices.len() > config.kernel.sample_cap {
        let mut rng = SeededRng::new(config.seed).substream(3);
        rng.shuffle(&mut indices);
        indices.truncate(config.kernel.sample_cap);
        indices.sort_unstable();
    }
    let mut embeddings = Vec::with_capacity(indices.len());
    for &i in &indices {
        let z = embed_patient_values(&model.params.embedding, &cohort.records[i])?;
        embeddings.push(z.slice_rows(0, f)?);
    }
    estimate_correlations(&embeddings, config.kernel.bandwidth)
}

/// Fraction of features that change group between consecutive K values.
/// Each group at the larger K is assigned a parent: the group at the smaller
/// K holding the plurality of its members (ties resolve to the lower index).
/// A feature switches when its small-K group is not its parent.
fn switch_fraction(small: &ClusterAssignment, large: &ClusterAssignment) -> f64 {
    let small_membership = small.membership();
    let large_membership = large.membership();
    let f = small_membership.len();
    let mut parent = vec![0usize; large.k()];
    for (gi, group) in large.groups().iter().enumerate() {
        let mut counts = vec![0usize; small.k()];
        for &feature in group {
            counts[small_membership[feature]] += 1;
        }
        let mut best = 0;
        for (s, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = s;
            }
        }
        parent[gi] = best;
    }
    let switched = (0..f)
        .filter(|&feature| small_membership[feature] != parent[large_membership[feature]])
        .count();
    switched as f64 / f as f64
}

pub fn sweep_k(args: &SweepKArgs) -> Result<()> {
    let config = args.flags.to_config(args.seed);
    config.validate()?;

    let schema_path = resolve_schema_path(&args.data_dir, &args.schema);
    let outcome = load_data(&args.data_dir, &schema_path)?;
    report_dropped(&outcome);
    let cohort = outcome.cohort;
    let ks = &args.k_list.0;

    let split = holdout_split(&cohort.labels(), args.seed)?;
    let normalized = preprocess(&cohort, &split.train)?;

    // Pairs of (assignment, correlations the assignment was computed from).
    let mut clusterings: Vec<(ClusterAssignment, Matrix)> = Vec::with_capacity(ks.len());
    if args.retrain {
        for &k in ks {
            let mut per_k = config.clone();
            per_k.clusters = Some(k);
            println!("k={k}: training");
            let model = train(&normalized, &split.train, Some(&split.val), &per_k)?;
            clusterings.push((model.assignment.clone(), model.correlations.clone()));
        }
    } else {
        println!("training shared embedding");
        let model = train(&normalized, &split.train, Some(&split.val), &config)?;
        let r = final_correlations(&normalized, &split.train, &model, &config)?;
        for (i, &k) in ks.iter().enumerate() {
            let seed = SeededRng::new(args.seed).substream(100 + i as u64).seed();
            clusterings.push((spectral_cluster(&r, k, seed)?, r.clone()));
        }
    }

    let blocks: Vec<SweepBlock> = clusterings
        .iter()
        .map(|(assignment, r)| SweepBlock {
            k: assignment.k(),
            groups: groups_by_name(assignment, &cohort.dynamic_names),
            between_group_correlation: between_group_correlation(r, assignment),
        })
        .collect();
    let switch_fractions: Vec<f64> = clusterings
        .windows(2)
        .map(|pair| switch_fraction(&pair[0].0, &pair[1].0))
        .collect();

    fs::create_dir_all(&args.out_dir)?;
    write_json(
        &args.out_dir.join("sweep.json"),
        &SweepFile {
            ks: ks.clone(),
            retrain: args.retrain,
            blocks,
            switch_fractions: switch_fractions.clone(),
        },
    )?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &SweepManifest {
            command: "sweep-k",
            data_dir: args.data_dir.display().to_string(),
            schema: schema_path.display().to_string(),
            out_dir: args.out_dir.display().to_string(),
            ks,
            retrain: args.retrain,
            config: &config,
        },
    )?;

    for (assignment, r) in &clusterings {
        println!(
            "k={}: between-group correlation {:.6}",
            assignment.k(),
            between_group_correlation(r, assignment)
        );
    }
    for (i, fraction) in switch_fractions.iter().enumerate() {
        println!(
            "k {} -> {}: switch fraction {:.4}",
            ks[i],
            ks[i + 1],
            fraction
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cluster-report
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ClusterFile {
    k: usize,
    groups: Vec<Vec<String>>,
    correlations: Matrix,
}

#[derive(Serialize)]
struct ClusterManifest {
    command: &'static str,
    checkpoint: String,
    out_dir: String,
}

fn cluster_text(file: &ClusterFile) -> String {
    let features: usize = file.groups.iter().map(Vec::len).sum();
    let mut out = format!("features: {}  groups: {}\n", features, file.k);
    for (i, group) in file.groups.iter().enumerate() {
        out.push_str(&format!("group {i} ({}): {}\n", group.len(), group.join(", ")));
    }
    out
}

pub fn cluster_report(args: &ClusterReportArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let file = ClusterFile {
        k: checkpoint.assignment.k(),
        groups: groups_by_name(&checkpoint.assignment, &checkpoint.dynamic_names),
        correlations: checkpoint.correlations,
    };

    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("clusters.json"), &file)?;
    let text = cluster_text(&file);
    fs::write(args.out_dir.join("clusters.txt"), &text)?;
    write_json(
        &args.out_dir.join("manifest.json"),
        &ClusterManifest {
            command: "cluster-report",
            checkpoint: args.checkpoint.display().to_string(),
            out_dir: args.out_dir.display().to_string(),
        },
    )?;

    match args.format {
        OutputFormat::Text => print!("{text}"),
        OutputFormat::Machine => {
            let body = serde_json::to_string_pretty(&file)
                .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
            println!("{body}");
        }
    }
    Ok(())
}
