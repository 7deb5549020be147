//! `relaxsoft` command line: data preparation, training, temperature grids,
//! experiment suites, evaluation and reporting.
//!
//! Exit codes: 0 success, 1 bad configuration or usage, 2 data or I/O
//! problem, 3 numerical failure during training.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "relaxsoft", version, about = "Relaxed softmax embeddings with Boltzmann negative sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Training configuration: a TOML or JSON file plus `key=value` overrides.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML or JSON configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a field, e.g. `--set temperature=3` or `--set eval.max_pairs=5000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Train on a pair cache instead of the configured dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Ground truth matching `--data`, enables KL metrics.
    #[arg(long, requires = "data")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub(crate) enum Command {
    /// Build a Gaussian-mixture ground truth and sample pairs from it.
    SynthGen {
        #[arg(long, default_value_t = 200)]
        card: usize,
        #[arg(long, default_value_t = 50)]
        components: usize,
        #[arg(long, default_value_t = 300_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        sample_seed: u64,
        #[arg(long, default_value_t = 0.02)]
        sigma_min: f64,
        #[arg(long, default_value_t = 0.08)]
        sigma_max: f64,
        /// Ground-truth file.
        #[arg(long)]
        out: PathBuf,
        /// Pair cache for the sampled pairs (all in the training split).
        #[arg(long)]
        pairs_out: Option<PathBuf>,
    },
    /// Write a generated text corpus.
    SynthText {
        #[arg(long, default_value_t = 2_000_000)]
        tokens: usize,
        #[arg(long, default_value_t = 30_000)]
        word_types: usize,
        #[arg(long, default_value_t = 8)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a whitespace-tokenized corpus into a split pair cache.
    IngestText {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[arg(long, default_value_t = 5000)]
        vocab_size: usize,
        #[arg(long)]
        max_bytes: Option<u64>,
        #[arg(long)]
        bidirectional: bool,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.1, 0.2])]
        split: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a ratings CSV into an item-to-item pair cache.
    IngestRatings {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        threshold: f64,
        #[arg(long, default_value_t = 15_000)]
        max_items: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value = "userId")]
        user_col: String,
        #[arg(long, default_value = "movieId")]
        item_col: String,
        #[arg(long, default_value = "rating")]
        rating_col: String,
        #[arg(long, default_value = "timestamp")]
        time_col: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.1, 0.2])]
        split: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its run record, metrics and checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
        #[arg(long)]
        no_checkpoint: bool,
    },
    /// Train once per temperature and select the best on validation.
    GridTemp {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Temperatures; `inf` is allowed.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<String>,
        /// kl_joint, kl_true, likelihood, mpr or prec@k.
        #[arg(long, default_value = "kl_joint")]
        metric: String,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Run every method × dataset × seed of a suite file and aggregate.
    Suite {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on pairs and/or word benchmarks.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Pair cache to rank on.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// train, valid or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 100)]
        mpr_negatives: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 15, 50])]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_pairs: Option<usize>,
        /// Word-similarity files (`word word score` lines).
        #[arg(long)]
        similarity: Vec<PathBuf>,
        #[arg(long)]
        spearman: bool,
        /// Analogy file with `:` section headers.
        #[arg(long)]
        analogy: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 15])]
        analogy_ks: Vec<usize>,
        /// Write the metrics JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write embeddings in word2vec text format.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        /// input (W) or output (O).
        #[arg(long, default_value = "input")]
        side: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Comparison table from a suite result, or a temperature chart from grid results.
    Report {
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        grid: Vec<PathBuf>,
        /// Write the table as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the temperature chart here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
