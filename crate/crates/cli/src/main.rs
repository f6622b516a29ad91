mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mill_core::cache::BackendKind;
use mill_core::{ErrorKind, Method};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Core(mill_core::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Core(e) => match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Backend => 3,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Core(e) => e.fmt(f),
        }
    }
}

impl From<mill_core::Error> for Failure {
    fn from(e: mill_core::Error) -> Self {
        Failure::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "mill", version, about = "Query expansion experiments over a BM25 index")]
struct Cli {
    /// More log output (repeatable). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save a BM25 index from a corpus file
    Index(IndexArgs),
    /// Expand every query, retrieve, and write a TREC run with provenance
    Run(ExperimentArgs),
    /// Score a run against qrels
    Eval(EvalArgs),
    /// Paired t-test between two runs on one metric
    Compare(CompareArgs),
    /// Show how one query was expanded
    Case(CaseArgs),
}

#[derive(Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// jsonl or tsv; guessed from the extension when omitted
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Overwrite an existing index file
    #[arg(long)]
    pub force: bool,
    /// Abort on the first malformed record instead of skipping it
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub no_stemming: bool,
    #[arg(long)]
    pub no_stopwords: bool,
}

#[derive(Args, Clone, Default)]
pub struct ExperimentArgs {
    /// TOML experiment file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Saved index (built from --corpus when absent)
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub corpus_format: Option<String>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// mill, wo-prf, wo-mv, wo-qqd, none, a prompt kind, or a prompt kind with `*`
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub mock_vocab: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub strict: bool,
    /// Run tag in the last column of the run file
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100, 1000])]
    pub cutoffs: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub rel_threshold: u32,
    /// tsv or json
    #[arg(long, default_value = "tsv")]
    pub format: String,
    /// Write the report here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub run_a: PathBuf,
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// ndcg, map, recall or mrr
    #[arg(long, default_value = "ndcg")]
    pub metric: String,
    #[arg(long, default_value_t = 10)]
    pub cutoff: usize,
    #[arg(long, default_value_t = 1)]
    pub rel_threshold: u32,
}

#[derive(Args)]
pub struct CaseArgs {
    #[arg(long)]
    pub query_id: String,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Index(a) => commands::index(a),
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
        Command::Case(a) => commands::case(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mill: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
