//! Command-line surface. Exit codes: 0 success, 2 invalid input or
//! configuration (including missing input files), 1 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mrc_enhance_core::harness::EvalMode;

use crate::commands;
use crate::config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

pub fn invalid(msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "mrc-enhance", version, about = "Enhance extractive reading-comprehension training sets")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed overriding every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-question generation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log debug output to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Retrieval,
    Reader,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Retrieval => EvalMode::Retrieval,
            ModeArg::Reader => EvalMode::Reader,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean and chunk a raw corpus, attach labels to passages, and validate them.
    Ingest(IngestArgs),
    /// Apply the cleaning rules to every document of a raw corpus.
    Clean(CleanArgs),
    /// Split raw documents into passages of at most --max-words words.
    Chunk(ChunkArgs),
    /// Drop labels whose answer is not found in their positive context.
    Validate(ValidateArgs),
    /// Shuffle labels and split them 80:10:10 into train/dev/test.
    MakeSplits(MakeSplitsArgs),
    /// Answer-length statistics for a split, optionally against a revised train set.
    Stats(StatsArgs),
    /// Generate enhanced training sets.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Average ROUGE-1 matrix between question sets of different methods.
    Simmatrix(SimmatrixArgs),
    /// Fine-tune on the original and every variant set and record a score ledger.
    Train(TrainArgs),
    /// Evaluate one checkpoint on a test set.
    Eval(EvalArgs),
    /// Order improving variants for continual fine-tuning.
    PlanContinual(PlanArgs),
    /// Fine-tune along a continual plan and record the result.
    RunContinual(RunContinualArgs),
    /// Concatenate the improving variants into one set and optionally score it.
    ConcatAugment(ConcatArgs),
    /// Render result and cost-benefit tables from score ledgers.
    Costbench(CostbenchArgs),
    /// Answer-shortening review service.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw corpus (JSON Lines: id, title, text).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Raw labels (DPR-style JSON).
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_words: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChunkArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub max_words: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    /// Output directory for labels.json and rejected.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeSplitsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory for train.json, dev.json, test.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Directory holding train.json, dev.json, test.json.
    #[arg(long)]
    pub split: PathBuf,
    /// Write the statistics JSON here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Revised (answer-shortened) train set to compare against.
    #[arg(long)]
    pub revised: Option<PathBuf>,
    /// Report bundle directory for the length report.
    #[arg(long, requires = "revised")]
    pub report_dir: Option<PathBuf>,
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Mine negative contexts, one suite per k.
    Negatives(NegativesArgs),
    /// Paraphrase questions into ranked sets.
    Paraphrase(ParaphraseArgs),
    /// Substitute a keyword with synonyms.
    Substitute(SubstituteArgs),
    /// Back-translate questions through pivot languages.
    Backtranslate(BacktranslateArgs),
}

#[derive(Debug, Args)]
pub struct NegativesArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub passages: PathBuf,
    /// Negatives per label; comma-separated for several suites.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5])]
    pub k: Vec<usize>,
    /// Occurrence cap per passage (default from config).
    #[arg(long, conflicts_with = "no_threshold")]
    pub threshold: Option<usize>,
    /// Disable the occurrence cap.
    #[arg(long)]
    pub no_threshold: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParaphraseArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Paraphraser name from the config (or a built-in kind: shuffle, echo).
    #[arg(long, default_value = "shuffle")]
    pub backend: String,
    /// Set numbers to write (1-5 ranked by similarity, 6 random).
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 4, 5, 6])]
    pub sets: Vec<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SubstituteArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Synonym table (JSON: word -> [synonyms]); default from config.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 4, 5, 6])]
    pub sets: Vec<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BacktranslateArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// `all` or comma-separated pivot codes.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub pivots: Vec<String>,
    /// Translator kind (identity, reverse, drift); default from config.
    #[arg(long)]
    pub translator: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimmatrixArgs {
    /// Question set as NAME=FILE, index-aligned by label id; at least two.
    #[arg(long = "set", value_name = "NAME=FILE", required = true)]
    pub sets: Vec<String>,
    #[arg(long, default_value = "dataset")]
    pub dataset: String,
    #[arg(long, value_enum, default_value = "retrieval")]
    pub mode: ModeArg,
    /// Report bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Original training set.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Directories of variant sets (label file plus manifest).
    #[arg(long, num_args = 1..)]
    pub variants: Vec<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Ledger CSV to write.
    #[arg(long)]
    pub ledger: PathBuf,
    /// Dataset name for per-dataset config overrides.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub checkpoint: String,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long, value_enum, default_value = "retrieval")]
    pub mode: ModeArg,
    /// Order every improving set instead of the best one per method.
    #[arg(long)]
    pub per_set: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunContinualArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Ledger CSV; the continual row is added to it.
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, num_args = 1..)]
    pub variants: Vec<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConcatArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long)]
    pub ledger: PathBuf,
    #[arg(long, num_args = 1..)]
    pub variants: Vec<PathBuf>,
    /// Directory for the concatenated set.
    #[arg(long)]
    pub out: PathBuf,
    /// Test set; when given, the concatenated set is scored and added to the ledger.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct CostbenchArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Ledger as NAME=FILE, one per dataset column.
    #[arg(long = "ledger", value_name = "NAME=FILE", required = true)]
    pub ledgers: Vec<String>,
    /// Report bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    /// Serve the review API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Train set to review.
    #[arg(long)]
    pub labels: PathBuf,
    /// Event log (JSON Lines); replayed at startup.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Flag answers longer than this many words (default from config).
    #[arg(long)]
    pub threshold: Option<usize>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Shared token required in the x-annotation-token header.
    #[arg(long, env = "MRC_ENHANCE_TOKEN")]
    pub token: Option<String>,
    /// Directory exports are written into (default: beside the log).
    #[arg(long)]
    pub export_dir: Option<PathBuf>,
}

/// Runtime settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub jobs: Option<usize>,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: bool) {
    let default = if verbose { "debug" } else { "info" };
    let filter = tracing_subscriber::EnvFilter::try_from_env("MRC_ENHANCE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ =
        tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).try_init();
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => {
            commands::require(p)?;
            PipelineConfig::load(p).map_err(|e| invalid(format!("{e:#}")))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds.split = seed;
        config.seeds.generation = seed;
        config.seeds.random_set = seed;
    }
    let ctx = Context { config, jobs: cli.jobs };
    match cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Clean(a) => commands::clean(&ctx, a),
        Command::Chunk(a) => commands::chunk(&ctx, a),
        Command::Validate(a) => commands::validate(&ctx, a),
        Command::MakeSplits(a) => commands::make_splits(&ctx, a),
        Command::Stats(a) => commands::stats(&ctx, a),
        Command::Gen(GenCommand::Negatives(a)) => commands::gen_negatives(&ctx, a),
        Command::Gen(GenCommand::Paraphrase(a)) => commands::gen_paraphrase(&ctx, a),
        Command::Gen(GenCommand::Substitute(a)) => commands::gen_substitute(&ctx, a),
        Command::Gen(GenCommand::Backtranslate(a)) => commands::gen_backtranslate(&ctx, a),
        Command::Simmatrix(a) => commands::simmatrix(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::PlanContinual(a) => commands::plan_continual_cmd(&ctx, a),
        Command::RunContinual(a) => commands::run_continual(&ctx, a),
        Command::ConcatAugment(a) => commands::concat_augment(&ctx, a),
        Command::Costbench(a) => commands::costbench(&ctx, a),
        Command::Annotate(AnnotateCommand::Serve(a)) => commands::annotate_serve(&ctx, a),
    }
}
