//! Command-line driver: synthetic data generation, training, evaluation,
//! cross-validation, K sweeps, and cluster reports.
//!
//! Every command writes a `manifest.json` into its output directory capturing
//! the fully resolved configuration and seed, so a run can be reproduced from
//! the manifest alone. Exit codes: 0 success, 2 validation, 3 I/O,
//! 4 divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use medfact::correlation::{Bandwidth, KernelConfig};
use medfact::training::{Ablation, TrainConfig};
use medfact::Error;

#[derive(Parser)]
#[command(
    name = "medfact",
    version,
    about = "Patient representation learning with feature clustering and graph convolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with planted feature groups.
    GenSynthetic(GenSyntheticArgs),
    /// Train a model on a cohort directory.
    Train(TrainArgs),
    /// Score a cohort against a checkpoint and report metrics.
    Evaluate(EvaluateArgs),
    /// K-fold cross-validation: train and evaluate one model per fold.
    Kfold(KfoldArgs),
    /// Cluster the features at several values of K and export the evolution.
    SweepK(SweepKArgs),
    /// Print the feature groups and correlation matrix of a checkpoint.
    ClusterReport(ClusterReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// Human-readable table on stdout.
    Text,
    /// JSON on stdout.
    Machine,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Directory for the .psv files, schema, sidecar, and manifest.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    patients: usize,
    #[arg(long, default_value_t = 12)]
    dynamic_features: usize,
    #[arg(long, default_value_t = 5)]
    static_features: usize,
    /// Number of planted feature groups.
    #[arg(long, default_value_t = 3)]
    true_groups: usize,
    #[arg(long, default_value_t = 4)]
    t_min: usize,
    #[arg(long, default_value_t = 16)]
    t_max: usize,
    /// Per-feature observation noise on top of the group latent series.
    #[arg(long, default_value_t = 0.3)]
    noise_std: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Flags shared by every command that trains models.
#[derive(Args)]
struct TrainFlags {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Number of feature groups; defaults to round(sqrt(F)).
    #[arg(long)]
    k: Option<usize>,
    /// Fraction of epochs with graph re-estimation before the freeze.
    #[arg(long, default_value_t = 0.2)]
    cluster_fraction: f64,
    /// Graph ablation: full, cor-, or clu-.
    #[arg(long, default_value = "full", value_parser = parse_ablation)]
    ablation: Ablation,
    /// Kernel bandwidth: "median" or a positive number.
    #[arg(long, default_value = "median", value_parser = parse_bandwidth)]
    bandwidth: Bandwidth,
    /// Largest number of patients per correlation estimation pass.
    #[arg(long, default_value_t = 2048)]
    sample_cap: usize,
    /// Early-stopping patience on validation AUPRC.
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// GRU hidden width.
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    /// Embedding width.
    #[arg(long, default_value_t = 16)]
    embed: usize,
    /// Attention width.
    #[arg(long, default_value_t = 16)]
    attention: usize,
}

impl TrainFlags {
    fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            clusters: self.k,
            cluster_epoch_fraction: self.cluster_fraction,
            ablation: self.ablation,
            seed,
            kernel: KernelConfig {
                bandwidth: self.bandwidth,
                sample_cap: self.sample_cap,
            },
            patience: self.patience,
            hidden: self.hidden,
            embed: self.embed,
            attention: self.attention,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of .psv patient files.
    #[arg(long)]
    data_dir: PathBuf,
    /// Column schema; defaults to <data-dir>/schema.json.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Directory for checkpoint, history, split, and manifest.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// split.json from a training run; selects `--subset` by patient id.
    #[arg(long)]
    split_file: Option<PathBuf>,
    /// Which split to score when --split-file is given.
    #[arg(long, default_value = "test")]
    subset: String,
    /// Bootstrap resample count for metric standard deviations.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct KfoldArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct SweepKArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated cluster counts, e.g. 2,4,6.
    #[arg(long, value_parser = parse_k_list)]
    k_list: KList,
    /// Train a fresh model per K instead of re-clustering one trained
    /// embedding.
    #[arg(long)]
    retrain: bool,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct ClusterReportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

/// Newtype so clap can carry a parsed list as one value.
#[derive(Clone, Debug)]
struct KList(Vec<usize>);

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    match s {
        "full" => Ok(Ablation::Full),
        "cor-" => Ok(Ablation::CorMinus),
        "clu-" => Ok(Ablation::CluMinus),
        other => Err(format!("unknown ablation {other:?}; use full, cor-, or clu-")),
    }
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s == "median" {
        return Ok(Bandwidth::Median);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(Bandwidth::Fixed(v)),
        Ok(v) => Err(format!("bandwidth must be positive, got {v}")),
        Err(_) => Err(format!("bandwidth must be \"median\" or a number, got {s:?}")),
    }
}

fn parse_k_list(s: &str) -> Result<KList, String> {
    let mut ks = Vec::new();
    for part in s.split(',') {
        let k: usize = part
            .trim()
            .parse()
            .map_err(|_| format!("invalid cluster count {part:?}"))?;
        if k == 0 {
            return Err("cluster counts must be at least 1".into());
        }
        ks.push(k);
    }
    if ks.is_empty() {
        return Err("k list is empty".into());
    }
    Ok(KList(ks))
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Io(_) => 3,
        Error::Divergence { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynthetic(args) => commands::gen_synthetic(&args),
        Command::Train(args) => commands::train_model(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Kfold(args) => commands::kfold(&args),
        Command::SweepK(args) => commands::sweep_k(&args),
        Command::ClusterReport(args) => commands::cluster_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_parsing() {
        assert_eq!(parse_ablation("full").unwrap(), Ablation::Full);
        assert_eq!(parse_ablation("cor-").unwrap(), Ablation::CorMinus);
        assert_eq!(parse_ablation("clu-").unwrap(), Ablation::CluMinus);
        assert!(parse_ablation("corminus").is_err());
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!(parse_bandwidth("median").unwrap(), Bandwidth::Median);
        assert_eq!(parse_bandwidth("2.5").unwrap(), Bandwidth::Fixed(2.5));
        assert!(parse_bandwidth("-1").is_err());
        assert!(parse_bandwidth("wide").is_err());
    }

    #[test]
    fn k_list_parsing() {
        assert_eq!(parse_k_list("2,4,6").unwrap().0, vec![2, 4, 6]);
        assert_eq!(parse_k_list(" 3 ").unwrap().0, vec![3]);
        assert!(parse_k_list("2,0").is_err());
        assert!(parse_k_list("2,x").is_err());
    }

    #[test]
    fn exit_codes_distinguish_failure_classes() {
        assert_eq!(exit_code(&Error::Config("bad".into())), 2);
        assert_eq!(
            exit_code(&Error::Io(std::io::Error::other("gone"))),
            3
        );
        assert_eq!(
            exit_code(&Error::Divergence {
                epoch: 0,
                batch: 1,
                message: "NaN".into()
            }),
            4
        );
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
