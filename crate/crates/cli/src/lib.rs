//! The `xlsearch` command line: synthetic corpora, base embeddings, SSS
//! tables, training, indexing, search and evaluation.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod config;

pub use commands::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Core(xlsearch_core::Error),
}

impl From<xlsearch_core::Error> for CliError {
    fn from(e: xlsearch_core::Error) -> Self {
        match e {
            xlsearch_core::Error::Config(problems) => CliError::Config(problems),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(vec![message.into()])
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.kind(),
        }
    }

    /// `error: <kind>: <message>` on a single line.
    pub fn line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error: {}: {message}", self.kind())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "xlsearch", version, about = "Cross-language code-to-code search")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = "XLSEARCH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker cap for every parallel stage.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dataset root containing `dataset.json`.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// `REINF-EMB` base embedding table instead of the featurizer.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Query language.
    #[arg(long, global = true)]
    pub source: Option<String>,
    /// Corpus language.
    #[arg(long, global = true)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k_p: Option<usize>,
    #[arg(long)]
    pub k_n: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairsArg {
    /// Query-candidate pairs of the training tuples.
    Tuples,
    /// Every source-target pair in the training split.
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKindArg {
    Separable,
    Compositional,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write featurizer base embeddings for every sample.
    Embed {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Compute semantic similarity scores by executing samples.
    Sss {
        #[arg(long, value_enum, default_value = "tuples")]
        pairs: PairsArg,
        /// Tab-separated query and target ids, one pair per line.
        #[arg(long)]
        pairs_file: Option<PathBuf>,
        /// Runner config (TOML or JSON) replacing the `[runner]` table.
        #[arg(long)]
        runner: Option<PathBuf>,
        #[arg(long)]
        corpus_size: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the query and document encoders.
    Train {
        #[arg(long)]
        sss: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        /// Directory for `query.enc`, `doc.enc`, `splits.json` and the report.
        #[arg(long)]
        out: PathBuf,
    },
    /// Project target-language samples into a search index.
    Index {
        /// Directory written by `train`.
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the top hits for one query as TSV.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        encoder: PathBuf,
        /// Dataset sample id or a source file.
        #[arg(long)]
        query: String,
        #[arg(short, long, default_value_t = 10)]
        n: usize,
    },
    /// Evaluate on a split and write `eval_report.json`.
    Eval {
        #[arg(long, required_unless_present = "untrained")]
        encoder: Option<PathBuf>,
        /// Evaluate the base embeddings without projection.
        #[arg(long, conflicts_with = "encoder")]
        untrained: bool,
        /// Comma-separated extra rankers: `bm25`, `ast`.
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<String>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic two-dialect corpus.
    Synth {
        #[arg(long, value_enum, default_value = "separable")]
        kind: SynthKindArg,
        #[arg(long, default_value_t = 40)]
        problems: usize,
        #[arg(long, default_value_t = 6)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one toy program on a JSON argument list.
    ToyRun {
        #[arg(long)]
        file: PathBuf,
        /// JSON array of arguments.
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 2.0)]
        timeout_s: f64,
    },
}
