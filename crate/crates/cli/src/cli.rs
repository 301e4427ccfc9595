//! Argument surface. Exit codes: 0 success, 2 configuration or input
//! error, 3 numerical failure.

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "mlatk",
    version,
    about = "Measure evasion attackability of multi-label classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate a synthetic multi-label dataset (sparse text format).
    Synth(SynthArgs),
    /// Train a linear or MLP model and write a checkpoint (+ manifest).
    Train(TrainArgs),
    /// Sweep label-space exploration methods over budgets; write curves.
    Explore(ExploreArgs),
    /// Compare greedy exploration against brute-force enumeration.
    Certify(CertifyArgs),
    /// Evaluate adversarial generalization bounds.
    Bounds(BoundsArgs),
    /// Merge exploration CSV runs from a directory into one long table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset path.
    #[arg(long)]
    pub out: String,
    /// Number of instances.
    #[arg(long)]
    pub n: usize,
    /// Feature dimension.
    #[arg(long)]
    pub d: usize,
    /// Label count.
    #[arg(long)]
    pub m: usize,
    /// Teacher weight rank; defaults to min(d, m).
    #[arg(long)]
    pub rank: Option<usize>,
    /// Shared label-noise weight in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub label_corr: f64,
    /// Label noise scale.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML config; flags below override its fields.
    #[arg(long)]
    pub config: Option<String>,
    /// Dataset path (overrides `data`).
    #[arg(long)]
    pub data: Option<String>,
    /// Checkpoint output path (overrides `output.checkpoint`).
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Manifest output path (overrides `output.manifest`).
    #[arg(long)]
    pub manifest: Option<String>,
    /// Model kind: linear or mlp (overrides `model.kind`).
    #[arg(long)]
    pub kind: Option<String>,
    /// Hidden widths for mlp, comma separated (overrides `model.hidden`).
    #[arg(long)]
    pub hidden: Option<String>,
    /// Hidden activation: identity, tanh or sigmoid.
    #[arg(long)]
    pub activation: Option<String>,
    /// Loss: zero_one, lse, squared_hinge or logistic.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Frobenius penalty weight.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Nuclear-norm penalty weight (low-rank countermeasure).
    #[arg(long)]
    pub lambda_nuc: Option<f64>,
    /// Enable adversarial training (countermeasure).
    #[arg(long, default_value_t = false)]
    pub adv_training: bool,
    /// Training-time attack budget.
    #[arg(long)]
    pub adv_mu_r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    /// Model checkpoint path.
    #[arg(long)]
    pub model: String,
    /// Dataset path.
    #[arg(long)]
    pub data: String,
    /// Comma-separated perturbation budgets, e.g. 0.1,0.5,1.0.
    #[arg(long)]
    pub budgets: String,
    /// Comma-separated methods out of gase,pgs,rs,os,ls.
    #[arg(long, default_value = "gase")]
    pub methods: String,
    /// Instance population: all or correct_only.
    #[arg(long, default_value = "correct_only")]
    pub population: String,
    /// Split to explore: train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Split fractions re-assigned after load (`f0,f1,f2`), or `none`.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub resplit: String,
    #[arg(long, default_value_t = 0)]
    pub resplit_seed: u64,
    /// Rescale features to this mean norm before exploring.
    #[arg(long)]
    pub normalize: Option<f64>,
    /// Targeted attack backend: pgd, penalty or exact_linear.
    #[arg(long, default_value = "pgd")]
    pub attack: String,
    /// Uniform flip margin.
    #[arg(long, default_value_t = 1e-3)]
    pub margin: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Stop exploring an instance once this many labels flipped.
    #[arg(long)]
    pub max_labels: Option<usize>,
    /// Relative tie window for greedy candidate scores.
    #[arg(long, default_value_t = 1e-9)]
    pub tie_tol: f64,
    /// Only require targets to flip; non-targets may flip too.
    #[arg(long, default_value_t = false)]
    pub no_preserve: bool,
    /// Loss driving the ls method: zero_one, lse, squared_hinge, logistic.
    #[arg(long, default_value = "squared_hinge")]
    pub loss: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Curve CSV output path.
    #[arg(long)]
    pub out_csv: String,
    /// Per-instance JSON output path.
    #[arg(long)]
    pub out_json: Option<String>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: String,
    /// Perturbation budget; 0 reports the degenerate all-ratios-1 table.
    #[arg(long)]
    pub budget: f64,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value = "all")]
    pub population: String,
    /// Split fractions re-assigned after load (`f0,f1,f2`), or `none`.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub resplit: String,
    #[arg(long, default_value_t = 0)]
    pub resplit_seed: u64,
    #[arg(long)]
    pub normalize: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub margin: f64,
    #[arg(long)]
    pub max_labels: Option<usize>,
    /// Include per-instance subset cost tables in the certificate.
    #[arg(long, default_value_t = false)]
    pub table: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Certificate JSON output path.
    #[arg(long)]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: String,
    /// Attack budget entering the surrogate risk increment.
    #[arg(long)]
    pub mu_r: f64,
    /// Confidence parameter in (0, 1).
    #[arg(long)]
    pub sigma: f64,
    /// Multi-layer capacity variant: main, supp or both. Ignored for
    /// linear models.
    #[arg(long, default_value = "both")]
    pub variant: String,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Split fractions re-assigned after load (`f0,f1,f2`), or `none`.
    #[arg(long, default_value = "0.6,0.2,0.2")]
    pub resplit: String,
    #[arg(long, default_value_t = 0)]
    pub resplit_seed: u64,
    #[arg(long)]
    pub normalize: Option<f64>,
    /// Bound rows as JSON.
    #[arg(long)]
    pub out_json: String,
    /// Optional CSV summary, one row per bound.
    #[arg(long)]
    pub out_csv: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding exploration CSV files.
    #[arg(long)]
    pub dir: String,
    /// Merged long-format CSV output path.
    #[arg(long)]
    pub out: String,
}
