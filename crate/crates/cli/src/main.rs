use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

#[derive(Parser)]
#[command(
    name = "clm",
    version,
    about = "Compositional language model: train, score, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count tokens in a corpus and write a vocabulary file.
    BuildVocab(BuildVocabArgs),
    /// Train a model; writes a checkpoint per epoch, the final model and a JSON-lines log.
    Train(TrainArgs),
    /// Print the log score of one sentence.
    Score(ScoreArgs),
    /// Contrastive entropy report over distortion levels.
    Eval(EvalArgs),
    /// Print a distorted copy of one sentence.
    Distort(DistortArgs),
    /// Run the chart, oracle and gradient diagnostics.
    Check(CheckArgs),
}

#[derive(Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// TOML run file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// `em` or `direct`.
    #[arg(long)]
    pub grad_mode: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_sentence_length: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Also print the highest-scoring bracketing.
    #[arg(long)]
    pub tree: bool,
    pub text: String,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Comma-separated distortion levels in [0, 1].
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Whitespace-separated plot data file.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Args)]
pub struct DistortArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub level: f64,
    #[arg(long)]
    pub seed: u64,
    pub text: String,
}

#[derive(Args)]
pub struct CheckArgs {
    /// Random parameters instead of a trained model.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub random: bool,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    /// First seed; seeds `seed..seed+seeds` are used.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Embedding sizes for random parameters.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 5)]
    pub gradient_max_len: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildVocab(a) => commands::build_vocab(a),
        Command::Train(a) => commands::train(a),
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::Distort(a) => commands::distort(a),
        Command::Check(a) => commands::check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error::exit_code(&e) as u8)
        }
    }
}
