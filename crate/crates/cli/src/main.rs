//! `wordtrust`: calibrate embeddings, explain and judge predictions, run the
//! noise experiment, analyse it, and drive the annotation study.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 internal error.

mod commands;
mod kvconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use kvconfig::KvFile;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// Argument-parser error, already formatted.
    Args(String),
    Core(wordtrust::Error),
    Internal(String),
}

impl From<wordtrust::Error> for CliError {
    fn from(e: wordtrust::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Args(_) | CliError::Core(wordtrust::Error::InvalidArgument(_)) => 2,
            CliError::Core(wordtrust::Error::Classifier(_)) | CliError::Internal(_) => 4,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Args(m) => f.write_str(m.trim_end()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "wordtrust", version, about = "Trustworthiness oracle for text classifiers")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find the relatedness threshold and AUC of each embedding file.
    Calibrate(CalibrateArgs),
    /// Explain the model's prediction on every corpus instance.
    Explain(ExplainArgs),
    /// Judge correct predictions with the oracle under one or all configurations.
    Judge(JudgeArgs),
    /// Train the noisy model grid and evaluate all 96 configurations on it.
    NoiseRun(NoiseRunArgs),
    /// Rank configurations from noise-run results and select one.
    Analyze(AnalyzeArgs),
    /// Draw a stratified annotation pool from judged instances.
    Sample(SampleArgs),
    /// Confusion matrix and per-label scores of the oracle against ground truth.
    Metrics(MetricsArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Key-value file supplying any of this command's flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Corpus JSONL of instances to process.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Training corpus (default: the processed corpus).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Built-in model: mnb or sgd.
    #[arg(long)]
    pub model: Option<String>,
    /// Command line of an external classifier speaking line-delimited JSON.
    #[arg(long)]
    pub external: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct LimeArgs {
    /// Perturbed samples per explanation.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Words kept per explanation.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct EnsembleArgs {
    /// Word-vector files.
    #[arg(long, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
    /// word2vec or glove text format.
    #[arg(long)]
    pub format: Option<String>,
    /// Calibration JSON per embedding, in the same order.
    #[arg(long, num_args = 1..)]
    pub calibrations: Vec<PathBuf>,
    /// Labelled word pairs to calibrate on when no calibrations are given.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ToolArgs {
    /// `all` for the 96-configuration grid, `default` for the default configuration.
    #[arg(long)]
    pub tool_config: Option<String>,
    #[arg(long)]
    pub exclusion_range: Option<f64>,
    #[arg(long)]
    pub weighting: Option<bool>,
    /// aggregation or voting.
    #[arg(long)]
    pub relatedness: Option<String>,
    #[arg(long)]
    pub explanation_threshold: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// average, plurality or sufficiency.
    #[arg(long)]
    pub trust: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Word list (one per line) to build pairs from, with --thesaurus.
    #[arg(long)]
    pub common_words: Option<PathBuf>,
    /// JSON object mapping words to synonym lists.
    #[arg(long)]
    pub thesaurus: Option<PathBuf>,
    /// Unrelated pairs to draw when building pairs.
    #[arg(long)]
    pub unrelated: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub lime: LimeArgs,
}

#[derive(Args, Debug, Clone)]
pub struct JudgeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub lime: LimeArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub tool: ToolArgs,
}

#[derive(Args, Debug, Clone)]
pub struct NoiseRunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub lime: LimeArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Bias sentence pool, one sentence per line (needed for bias noise).
    #[arg(long)]
    pub bias_pool: Option<PathBuf>,
    /// Model kinds (mnb, sgd).
    #[arg(long, num_args = 1..)]
    pub models: Vec<String>,
    /// Noise kinds (removal, label, bias, payload).
    #[arg(long, num_args = 1..)]
    pub noise: Vec<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Also write every instance's trust tuples.
    #[arg(long)]
    pub instances: Option<bool>,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// results.jsonl written by noise-run.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory of a single-configuration judge run.
    #[arg(long)]
    pub judged: Option<PathBuf>,
    /// Pool size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Maximum deviation of each verdict's share from one third.
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ground-truth JSONL (id, oracle, label).
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Annotation pool written by `sample`.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Where the event log and dataset snapshot live.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Idle seconds after which a leased task returns to the pool.
    #[arg(long)]
    pub lease_secs: Option<u64>,
}

/// Re-reads the command line with the config file's values spliced in
/// right after the subcommand name.
fn with_config(argv: Vec<String>) -> Result<Cli, CliError> {
    let usage = |e: clap::Error| CliError::Args(e.to_string());
    let first = Cli::try_parse_from(&argv).map_err(|e| {
        if e.use_stderr() {
            usage(e)
        } else {
            let _ = e.print();
            std::process::exit(0);
        }
    })?;
    let config = match &first.command {
        Command::Calibrate(a) => a.common.config.clone(),
        Command::Explain(a) => a.common.config.clone(),
        Command::Judge(a) => a.common.config.clone(),
        Command::NoiseRun(a) => a.common.config.clone(),
        Command::Analyze(a) => a.common.config.clone(),
        Command::Sample(a) => a.common.config.clone(),
        Command::Metrics(a) => a.common.config.clone(),
        Command::Serve(a) => a.common.config.clone(),
    };
    let Some(path) = config else {
        return Ok(first);
    };
    let kv = KvFile::load(&path)?;
    let mut cmd = Cli::command();
    let pos = argv
        .iter()
        .skip(1)
        .position(|a| cmd.get_subcommands().any(|s| s.get_name() == a))
        .map(|p| p + 1)
        .ok_or_else(|| CliError::Usage("missing subcommand".into()))?;
    let sub = cmd.find_subcommand_mut(&argv[pos]).expect("parsed subcommand");
    let known: Vec<(String, bool)> = sub
        .get_arguments()
        .filter_map(|a| {
            let multi = a.get_num_args().is_some_and(|n| n.max_values() > 1);
            a.get_long().map(|l| (l.to_string(), multi))
        })
        .collect();
    let present: Vec<String> = argv[pos + 1..]
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let injected = kv.to_args(&known, &present, &path.display().to_string())?;
    let mut merged = argv[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&argv[pos + 1..]);
    let matches = Cli::command().try_get_matches_from(&merged).map_err(usage)?;
    Cli::from_arg_matches(&matches).map_err(usage)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Explain(a) => commands::explain(a),
        Command::Judge(a) => commands::judge(a),
        Command::NoiseRun(a) => commands::noise_run(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Sample(a) => commands::sample(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Serve(a) => commands::serve(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match with_config(argv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.code());
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let outcome = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(CliError::Internal(msg))
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.code())
        }
    }
}
