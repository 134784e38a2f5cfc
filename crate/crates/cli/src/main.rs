//! `stylemetric` command-line front end.
//!
//! Exit codes: 0 success, 1 environment or I/O failure, 2 validation failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "stylemetric", version, about = "Perception-calibrated stylized face identity toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic toy dataset: manifests, input features, a forced-choice log and held-out pairs.
    Synth(SynthArgs),
    /// Filter a response log and estimate recognition-accuracy curves per (method, style).
    Calibrate(CalibrateArgs),
    /// Keep the reliable strength levels of each curve and emit the supervision manifest.
    BuildPairs(BuildPairsArgs),
    /// Train adapters and the class head on a supervision manifest.
    Train(TrainArgs),
    /// Embed input features with a trained checkpoint (or the frozen reference path).
    Embed(EmbedArgs),
    /// Score verification pairs: TPR at fixed FPR, accuracy at fixed thresholds, AUROC.
    EvalVerify(EvalVerifyArgs),
    /// Top-k identity retrieval accuracy.
    EvalRetrieve(EvalRetrieveArgs),
    /// Mean cosine between views of the same identity.
    EvalPose(EvalPoseArgs),
    /// Agreement between model decisions and human judgments.
    EvalAgreement(EvalAgreementArgs),
    /// Merge partial reports and export the final report with ROC point files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory, created if absent. Nothing is written elsewhere.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    out: OutDir,
    #[arg(long, default_value_t = 20)]
    identities: usize,
    #[arg(long, default_value_t = 30)]
    samples_per_identity: usize,
    /// Identities held out from training (the last ones by index).
    #[arg(long, default_value_t = 6)]
    test_identities: usize,
    /// Forced-choice responses per (method, style, strength); accuracy falls by one response per level.
    #[arg(long, default_value_t = 10)]
    responses_per_level: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct LatencyArgs {
    /// Responses slower than this many seconds are dropped.
    #[arg(long, default_value_t = stylemetric::calibration::DEFAULT_MAX_LATENCY_S)]
    max_latency: f64,
    /// Responses faster than this many seconds are dropped.
    #[arg(long, default_value_t = stylemetric::calibration::DEFAULT_MIN_LATENCY_S)]
    min_latency: f64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Response log (CSV with the documented header).
    #[arg(long)]
    responses: PathBuf,
    /// Sample manifest (one JSON object per line).
    #[arg(long)]
    samples: PathBuf,
    #[command(flatten)]
    latency: LatencyArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct BuildPairsArgs {
    /// Curves written by `calibrate`.
    #[arg(long)]
    curves: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    /// Minimum recognition accuracy for a strength level to count as a positive.
    #[arg(long, default_value_t = stylemetric::calibration::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    out: OutDir,
}

/// Hyperparameter overrides. Precedence: these flags, then `--config`, then the
/// resumed checkpoint's values, then built-in defaults.
#[derive(Debug, Args, Default)]
struct HyperparamFlags {
    /// `key = value` config file (same keys as `--set`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Additive angular margin m, radians [default: 0.5].
    #[arg(long)]
    margin_m: Option<String>,
    /// Logit scale alpha [default: 32].
    #[arg(long)]
    scale_alpha: Option<String>,
    /// Contrastive loss weight [default: 0.6].
    #[arg(long)]
    lambda_scon: Option<String>,
    /// Embedding regularization weight [default: 0.1].
    #[arg(long)]
    lambda_reg: Option<String>,
    /// Contrastive temperature tau [default: 0.07].
    #[arg(long)]
    temperature_tau: Option<String>,
    /// LoRA rank [default: 8].
    #[arg(long)]
    adapter_rank: Option<String>,
    /// LoRA output scale, or `auto` for 1/rank [default: auto].
    #[arg(long)]
    adapter_scale: Option<String>,
    /// AdamW learning rate [default: 2e-4].
    #[arg(long)]
    learning_rate: Option<String>,
    /// AdamW decoupled weight decay [default: 0.01].
    #[arg(long)]
    weight_decay: Option<String>,
    /// Identities per batch [default: 56].
    #[arg(long)]
    batch_identities: Option<String>,
    /// Samples per identity per batch [default: 2].
    #[arg(long)]
    samples_per_identity: Option<String>,
    /// Optimizer steps [default: 30000].
    #[arg(long)]
    total_iterations: Option<String>,
    /// Steps between checkpoints [default: 1000].
    #[arg(long)]
    checkpoint_every: Option<String>,
    /// Root seed for adapter init, head fallback init and batch sampling [default: 0].
    #[arg(long)]
    seed: Option<String>,
    /// Any hyperparameter as KEY=VALUE (keys: margin_m, scale_alpha, lambda_scon, lambda_reg,
    /// temperature_tau, adapter_rank, adapter_scale, learning_rate, beta1 [0.9], beta2 [0.999],
    /// adam_eps [1e-8], weight_decay, batch_identities, samples_per_identity, total_iterations,
    /// checkpoint_every, seed). Repeatable; conflicting values for one key are rejected.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct BackboneFlags {
    /// Backbone config as JSON; conflicts with the individual backbone flags.
    #[arg(long, conflicts_with_all = ["architecture", "hidden_dim", "embed_dim", "tokens", "tier", "base_seed"])]
    backbone: Option<PathBuf>,
    /// toy-mlp, toy-transformer or external (external backbones are library-only).
    #[arg(long, default_value = "toy-mlp")]
    architecture: String,
    /// Hidden width at the full tier.
    #[arg(long, default_value_t = 256)]
    hidden_dim: usize,
    /// Embedding dimension d.
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
    /// Token count for toy-transformer; must divide the input dimension.
    #[arg(long, default_value_t = 4)]
    tokens: usize,
    /// full, small or tiny.
    #[arg(long, default_value = "full")]
    tier: String,
    /// Seed of the frozen base weights.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Supervision manifest written by `build-pairs`.
    #[arg(long)]
    manifest: PathBuf,
    /// Provenance written by `build-pairs`.
    #[arg(long)]
    provenance: PathBuf,
    /// Backbone input features, one row per sample id (embedding file format).
    #[arg(long)]
    features: PathBuf,
    /// Continue from a checkpoint written by an earlier `train`.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Record zero wall times so the loss log is byte-identical across runs.
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    hyperparams: HyperparamFlags,
    #[command(flatten)]
    backbone: BackboneFlags,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Embed only the samples of this manifest, in manifest order.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Use the frozen base path (no adapters).
    #[arg(long)]
    reference: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct EvalVerifyArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Pair list: id_a,id_b,same with same in {0,1}.
    #[arg(long)]
    pairs: PathBuf,
    /// Extra FPR operating points for operating_points.csv (1e-2, 1e-3, 1e-4 are always included).
    #[arg(long = "fpr-target")]
    fpr_targets: Vec<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct EvalRetrieveArgs {
    #[arg(long)]
    gallery: PathBuf,
    /// Query embeddings; defaults to the gallery (each query skips its own row).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Manifest giving the identity of every gallery and query sample.
    #[arg(long)]
    manifest: PathBuf,
    /// Neighbors per query. The report's retrieval_top4 field is filled only for k = 4.
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct EvalPoseArgs {
    /// Embeddings of the views; each identity's samples are its views.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct EvalAgreementArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Human response log. Verification rows are compared with `cosine >= threshold`;
    /// forced-choice rows with the option of higher cosine to the source (a on ties).
    #[arg(long)]
    responses: PathBuf,
    /// Cosine threshold for model "same" decisions on verification rows.
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    #[command(flatten)]
    latency: LatencyArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Partial report.json files from the eval-* commands, merged in order (later wins).
    #[arg(long = "partial", required = true)]
    partials: Vec<PathBuf>,
    /// Verification scores (scores.csv from eval-verify) for the ROC point files.
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
