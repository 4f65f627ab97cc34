mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beyondct::Error;

#[derive(Debug, Parser)]
#[command(name = "beyondct", version, about = "CT-based lung function regression")]
pub struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// fvc or fev1
    #[arg(long, global = true)]
    pub target: Option<String>,
    #[arg(long, global = true)]
    pub use_demographics: bool,
    /// Desk-scale model preset (64³ input, width 64).
    #[arg(long, global = true)]
    pub tiny: bool,
    /// Single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Dotted-path override, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides paths.output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a NIfTI-1 file to the canonical volume format.
    Import {
        input: PathBuf,
        output: PathBuf,
    },
    /// Resample, pad/crop and normalize a volume to the model cube.
    Preprocess {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        cube: Option<usize>,
    },
    /// Write a phantom cohort (volumes + manifest.csv).
    PhantomGen {
        #[arg(long, default_value_t = 250)]
        count: usize,
    },
    /// Apply one seeded augmentation plan and dump the result.
    AugmentPreview {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value = "preview")]
        subject: String,
        #[arg(long, default_value = "scan1")]
        scan: String,
        #[arg(long, default_value_t = 1)]
        epoch: u64,
    },
    /// Split, train with best-checkpoint selection, predict the test split.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Predict every manifest row with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Metrics, subgroup tests and plot tables from a predictions CSV.
    Evaluate {
        predictions: PathBuf,
        /// Second predictions file for a paired comparison of absolute errors.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Merge the evaluation reports of several runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 8)]
        per_tensor: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut body = serde_json::json!({
        "kind": e.kind(),
        "message": e.to_string(),
    });
    if let Error::Config(v) = e {
        body["violations"] = serde_json::json!(v);
    }
    serde_json::json!({ "error": body })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
