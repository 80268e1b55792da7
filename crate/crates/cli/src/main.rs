mod adapters;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use randprompt_ad_core::experiment::{Components, Setup};
use randprompt_ad_core::metrics::AuprMode;
use randprompt_ad_core::prompts::WordPair;
use randprompt_ad_core::{ErrorClass, ScoreKind};
use serde::{Deserialize, Serialize};

use config::{CommaList, SeedList};

/// Anomaly detection trained on randomly augmented prompt embeddings.
#[derive(Debug, Parser)]
#[command(name = "randprompt-ad", version)]
pub struct Cli {
    /// JSON file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root that relative input paths are resolved against.
    #[arg(long, global = true, env = "RANDPROMPT_AD_DATA")]
    pub data_root: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a prompt file of random-word prompt pairs, or guide prompts.
    GenPrompts(GenPromptsArgs),
    /// Train the detector on paired text embeddings and save a checkpoint.
    Train(TrainArgs),
    /// Score image embeddings and write a score CSV.
    Score(ScoreArgs),
    /// Evaluate a score CSV, or run full experiments over seeds.
    Eval(EvalArgs),
    /// Run experiments over a range of prompt-pair counts or word pairs.
    Sweep(SweepArgs),
    /// Print tables from saved evaluation reports.
    Report(ReportArgs),
    /// Build a manifest from a category/train|test/good|<defect> tree.
    MakeManifest(MakeManifestArgs),
    /// Write a synthetic embedding fixture and a matching config.
    SynthFixture(SynthFixtureArgs),
}

/// Flags shared by every subcommand struct: all optional so a config file
/// can fill them in.
macro_rules! flag_struct {
    ($(#[$m:meta])* pub struct $name:ident { $($body:tt)* }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
        #[serde(default)]
        pub struct $name { $($body)* }
    };
}

flag_struct! {
    pub struct GenPromptsArgs {
        #[arg(long)]
        pub seed: Option<u64>,
        /// Number of prompt pairs.
        #[arg(long)]
        pub n_pairs: Option<usize>,
        /// `NORMAL:ANOMALY` words, or a grid name such as `good-broken`.
        #[arg(long)]
        pub word_pair: Option<WordPair>,
        #[arg(long)]
        pub l_min: Option<usize>,
        #[arg(long)]
        pub l_max: Option<usize>,
        #[arg(long)]
        pub alphabet: Option<String>,
        /// Write guide prompts instead of random-word pairs.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub guides: Option<bool>,
        /// Categories for known-object guides, comma separated.
        #[arg(long)]
        pub categories: Option<CommaList>,
        /// Take known-object categories from a manifest.
        #[arg(long)]
        pub manifest: Option<PathBuf>,
        /// Output prompt file; standard output when absent.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct DetectorArgs {
        /// Three hidden widths, e.g. `512,256,128`.
        #[arg(long)]
        pub hidden_dims: Option<CommaList>,
        #[arg(long)]
        pub dropout: Option<f64>,
        #[arg(long)]
        pub epochs: Option<usize>,
        #[arg(long)]
        pub batch_size: Option<usize>,
        #[arg(long)]
        pub lr: Option<f64>,
        #[arg(long)]
        pub weight_decay: Option<f64>,
        #[arg(long)]
        pub lr_decay_factor: Option<f64>,
        #[arg(long)]
        pub lr_decay_every: Option<usize>,
        /// L2-normalize embeddings before the detector (default true).
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub normalize_inputs: Option<bool>,
    }
}

flag_struct! {
    pub struct TrainArgs {
        #[arg(long)]
        pub train_normals: Option<PathBuf>,
        #[arg(long)]
        pub train_anomalies: Option<PathBuf>,
        /// Use only the first N pairs.
        #[arg(long)]
        pub n_pairs: Option<usize>,
        #[arg(long)]
        pub seed: Option<u64>,
        #[command(flatten)]
        #[serde(flatten)]
        pub detector: DetectorArgs,
        /// Checkpoint to write.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct InputArgs {
        #[arg(long)]
        pub manifest: Option<PathBuf>,
        #[arg(long)]
        pub images: Option<PathBuf>,
        #[arg(long)]
        pub refs: Option<PathBuf>,
        #[arg(long)]
        pub guide_normal: Option<PathBuf>,
        #[arg(long)]
        pub guide_anomaly: Option<PathBuf>,
        /// `zero-shot-unknown`, `zero-shot-known` or `few-shot-K`.
        #[arg(long)]
        pub setup: Option<Setup>,
        /// Score components to sum, e.g. `s_pr,s_fnn`.
        #[arg(long)]
        pub components: Option<Components>,
        #[arg(long)]
        pub temperature: Option<f64>,
    }
}

flag_struct! {
    pub struct ScoreArgs {
        #[command(flatten)]
        #[serde(flatten)]
        pub inputs: InputArgs,
        /// Trained detector, required for s_fnn.
        #[arg(long)]
        pub checkpoint: Option<PathBuf>,
        /// Seed for few-shot reference sampling.
        #[arg(long)]
        pub seed: Option<u64>,
        /// Score CSV to write.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct ExperimentArgs {
        #[command(flatten)]
        #[serde(flatten)]
        pub inputs: InputArgs,
        #[arg(long)]
        pub train_normals: Option<PathBuf>,
        #[arg(long)]
        pub train_anomalies: Option<PathBuf>,
        #[arg(long)]
        pub n_pairs: Option<usize>,
        #[arg(long)]
        pub word_pair: Option<WordPair>,
        /// Seeds such as `0-9` or `0,3,7`.
        #[arg(long)]
        pub seeds: Option<SeedList>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub multi_crop: Option<bool>,
        #[arg(long)]
        pub aupr: Option<AuprMode>,
        /// Label for reports.
        #[arg(long)]
        pub method: Option<String>,
        #[command(flatten)]
        #[serde(flatten)]
        pub detector: DetectorArgs,
    }
}

flag_struct! {
    pub struct EvalArgs {
        /// Evaluate an existing score CSV instead of running experiments.
        #[arg(long)]
        pub scores: Option<PathBuf>,
        /// Score kind to evaluate from the CSV (default: `sum` if present).
        #[arg(long)]
        pub kind: Option<ScoreKind>,
        #[command(flatten)]
        #[serde(flatten)]
        pub experiment: ExperimentArgs,
        /// Report JSON to write.
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Also write the text table here.
        #[arg(long)]
        pub table_out: Option<PathBuf>,
        /// Write per-sample scores (one CSV per seed when several).
        #[arg(long)]
        pub scores_out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct SweepArgs {
        /// `n_pairs` or `word_pair`.
        #[arg(long)]
        pub variable: Option<String>,
        /// Comma-separated values; `grid` sweeps all 16 word pairs.
        #[arg(long)]
        pub values: Option<CommaList>,
        #[command(flatten)]
        #[serde(flatten)]
        pub experiment: ExperimentArgs,
        /// Sweep CSV to write.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct ReportArgs {
        /// Report JSON files.
        #[arg(long, num_args = 1..)]
        pub reports: Option<Vec<PathBuf>>,
        /// Print each report's per-category table too.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        pub detail: Option<bool>,
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct MakeManifestArgs {
        /// Dataset root holding one folder per category.
        #[arg(long)]
        pub root: Option<PathBuf>,
        /// Restrict to these categories.
        #[arg(long)]
        pub categories: Option<CommaList>,
        /// Few-shot references taken from train/good per category.
        #[arg(long)]
        pub refs_per_category: Option<usize>,
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Manifest of the reference images, in reference-file row order.
        #[arg(long)]
        pub refs_out: Option<PathBuf>,
    }
}

flag_struct! {
    pub struct SynthFixtureArgs {
        #[arg(long)]
        pub out_dir: Option<PathBuf>,
        #[arg(long)]
        pub dim: Option<usize>,
        /// Distance between the cluster means in standard deviations.
        #[arg(long)]
        pub margin: Option<f64>,
        #[arg(long)]
        pub n_pairs: Option<usize>,
        /// Test images per category and class.
        #[arg(long)]
        pub per_class: Option<usize>,
        #[arg(long)]
        pub refs_per_category: Option<usize>,
        #[arg(long)]
        pub categories: Option<CommaList>,
        #[arg(long)]
        pub seed: Option<u64>,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
