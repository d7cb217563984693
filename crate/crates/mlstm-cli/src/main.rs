//! `mlstm` command-line driver: synthetic data generation, training,
//! batch and streaming evaluation, embedding export, and clustering.
//!
//! Exit codes: 0 success, 2 usage error, 3 missing required option,
//! 4 unreadable or unwritable file, 5 malformed data or invalid
//! configuration, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mlstm", version, about = "Multi-source LSTM user-behavior classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Precedence: built-in defaults, then
/// the config file, then explicit flags.
#[derive(Args, Clone)]
pub struct CommonArgs {
    /// Seed governing all randomness (default 42)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON config file with default overrides
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset (full set plus a chronological
    /// train/test split and a matching word-vector file)
    Synth(SynthArgs),
    /// Train a model on an edit log and write a checkpoint
    Train(TrainArgs),
    /// Evaluate batch detection metrics at one or more thresholds
    Eval(EvalArgs),
    /// Stream edits through the model and report early-detection results
    Stream(StreamArgs),
    /// Cluster exported embeddings with DBSCAN
    Cluster(ClusterArgs),
    /// Export user embeddings as TSV
    Export(ExportArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of users to generate
    #[arg(long)]
    pub users: Option<usize>,

    /// Mean edits per user
    #[arg(long)]
    pub mean_edits: Option<usize>,

    /// Class separability in [0, 1]
    #[arg(long)]
    pub separability: Option<f64>,

    /// Output directory
    #[arg(long)]
    pub out: PathBuf,

    /// Word-vector dimension for the generated vectors file
    #[arg(long)]
    pub dim: Option<usize>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Edit log (line-delimited JSON)
    #[arg(long)]
    pub edits: PathBuf,

    /// Labels TSV (user_id<TAB>vandal|benign)
    #[arg(long)]
    pub labels: PathBuf,

    /// Pretrained word vectors (text format, no header)
    #[arg(long)]
    pub vectors: PathBuf,

    /// Training epochs (default 25)
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Hidden dimension (default 32)
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Word-vector dimension; inferred from the vectors file when omitted
    #[arg(long)]
    pub dim: Option<usize>,

    /// Shuffle user order each epoch (seeded)
    #[arg(long)]
    pub shuffle: bool,

    /// Write per-epoch loss/accuracy TSV here
    #[arg(long)]
    pub history: Option<PathBuf>,

    /// Checkpoint output path
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model checkpoint
    #[arg(long)]
    pub ckpt: PathBuf,

    #[arg(long)]
    pub edits: PathBuf,

    #[arg(long)]
    pub labels: PathBuf,

    /// Word vectors used at training time
    #[arg(long)]
    pub vectors: PathBuf,

    /// Decision threshold(s), comma-separated (default 0.5)
    #[arg(long)]
    pub tau: Option<String>,

    /// Write the metrics TSV here
    #[arg(long)]
    pub report: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    #[arg(long)]
    pub edits: PathBuf,

    #[arg(long)]
    pub labels: PathBuf,

    #[arg(long)]
    pub vectors: PathBuf,

    /// Decision threshold(s), comma-separated (default 0.5)
    #[arg(long)]
    pub tau: Option<String>,

    /// Per-user streaming report TSV
    #[arg(long)]
    pub report: PathBuf,

    /// Write the per-threshold summary TSV here
    #[arg(long)]
    pub summary: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args)]
pub struct ClusterArgs {
    /// Embeddings TSV produced by `export`
    #[arg(long)]
    pub embeddings: PathBuf,

    /// Neighborhood radius (default 0.05)
    #[arg(long)]
    pub eps: Option<f64>,

    /// Minimum neighborhood size (default 3)
    #[arg(long)]
    pub min_pts: Option<usize>,

    /// Cluster report TSV (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,

    #[arg(long)]
    pub edits: PathBuf,

    #[arg(long)]
    pub labels: PathBuf,

    #[arg(long)]
    pub vectors: PathBuf,

    /// Embeddings TSV output path
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<mlstm::Error>() {
            return match e {
                mlstm::Error::Io(_) => 4,
                _ => 5,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = err.print();
                    return ExitCode::SUCCESS;
                }
                ErrorKind::MissingRequiredArgument => 3,
                _ => 2,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
