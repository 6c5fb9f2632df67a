//! `calibkit`: generate datasets, sample a model, score confidence methods
//! and evaluate them over nested answer-cardinality pools.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "calibkit",
    version,
    about = "Confidence estimation for multi-answer questions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a math dataset, or a synthetic dataset together with its samples.
    Generate(GenerateArgs),
    /// Sample answers (and optional second-turn probes) from an endpoint.
    Sample(SampleArgs),
    /// Cluster samples, label chosen answers and run confidence methods.
    Score(ScoreArgs),
    /// Compute accuracy, confidence, AUROC and ECE per pool.
    Evaluate(EvaluateArgs),
    /// Pick the aggregation threshold on a dev split.
    Tune(TuneArgs),
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("kind").required(true).args(["math", "synthetic"])))]
pub struct GenerateArgs {
    /// Rule-checkable math questions.
    #[arg(long)]
    pub math: bool,
    /// Simulated questions plus simulated samples.
    #[arg(long)]
    pub synthetic: bool,
    /// Synthetic benchmark description (TOML); defaults apply when omitted.
    #[arg(long, requires = "synthetic")]
    pub spec: Option<PathBuf>,
    /// Output directory; receives dataset.jsonl (and samples.jsonl).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Questions per (domain, answer count) cell.
    #[arg(long)]
    pub per_cell: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Endpoint configuration (TOML).
    #[arg(long)]
    pub endpoint: PathBuf,
    /// Samples per question.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Methods whose second-turn queries should be collected, comma separated, or `all`.
    #[arg(long, default_value = "")]
    pub methods: String,
    /// Top-k list length.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Sample file; questions already present are skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum JudgeKind {
    Rule,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MassModeArg {
    Distinct,
    Multiplicity,
}

#[derive(Args, Debug)]
pub struct JudgeArgs {
    #[arg(long, value_enum, default_value = "rule")]
    pub judge: JudgeKind,
    /// Endpoint configuration for the remote judge.
    #[arg(long, required_if_eq("judge", "remote"))]
    pub endpoint: Option<PathBuf>,
    /// How repeated sequences contribute to cluster mass.
    #[arg(long, value_enum, default_value = "distinct")]
    pub mass_mode: MassModeArg,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    /// Comma-separated method ids, or `all`.
    #[arg(long, default_value = "all")]
    pub methods: String,
    /// Aggregation threshold; repeat to score several.
    #[arg(long, default_values_t = vec![0.0])]
    pub tau: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[command(flatten)]
    pub judge: JudgeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// JSONL of {question_id, correct} overriding the labels in the scores.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "1;1,2;1,2,4;1,2,4,6")]
    pub pools: String,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_md: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub dev_frac: f64,
    #[arg(long, default_value = "sca")]
    pub method: String,
    /// Comma-separated thresholds or `start:stop:step`.
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub judge: JudgeArgs,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: e.into(),
        }
    }

    pub fn transport(e: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 3,
            error: e.into(),
        }
    }

    pub fn degenerate(e: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 4,
            error: e.into(),
        }
    }

    pub fn other(e: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Score(a) => commands::score(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Tune(a) => commands::tune(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
