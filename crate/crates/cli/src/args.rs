use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tension_core::annotation::{DEFAULT_AL_BATCH, DEFAULT_AL_THRESHOLD};
use tension_core::embed::DEFAULT_HASH_DIMENSION;
use tension_core::pipeline::DEFAULT_TEST_RATIO;
use tension_core::topics::{DEFAULT_TOPIC_COUNT, DEFAULT_TOP_N};

/// Tension analysis over committee summary records.
#[derive(Debug, Parser)]
#[command(name = "tension", version)]
pub struct Cli {
    /// Corpus store directory. Defaults to the config file's `store`, then `store`.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// TOML config file (port, bind, store, embedding_url, cors_origins).
    #[arg(long, global = true, env = "TENSION_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split transcripts into paragraphs and add them to the store.
    Ingest(IngestArgs),
    /// Embed every paragraph with the hashing provider or an external service.
    Embed(EmbedArgs),
    /// Cluster embeddings into topics with c-TF-IDF keywords.
    Topics(TopicsArgs),
    /// Train the tension head on the labelled paragraphs and rescore the corpus.
    Train(TrainArgs),
    /// Evaluate the current model.
    Eval(EvalArgs),
    /// Open an active-learning round if none is open and print the batch.
    AlNext(AlNextArgs),
    /// Import annotator label CSVs and report pairwise Cohen's kappa.
    AlImport(AlImportArgs),
    /// Corpus summary.
    Stats(StatsArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Write speaker-coverage and class-balance tables.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Transcript files or directories of `.txt` files named like `WHC-35COM.txt`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Built-in profile name (`modern`, `reported`) or a rules file.
    #[arg(long, default_value = "modern")]
    pub profile: String,
    /// Directory with countries.txt, demonyms.txt, organisations.txt and roles.txt.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Store to write; same as the global `--store`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderChoice {
    Hashing,
    External,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value_t = ProviderChoice::Hashing)]
    pub provider: ProviderChoice,
    /// Vector dimension. The external service must return this many values.
    #[arg(long, default_value_t = DEFAULT_HASH_DIMENSION)]
    pub dimension: usize,
    /// External service URL; defaults to `embedding_url` from the config.
    #[arg(long)]
    pub url: Option<String>,
    /// Provider id recorded for external vectors.
    #[arg(long)]
    pub provider_id: Option<String>,
    /// Texts per request to the external service.
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Attempts per batch when the service is unreachable or returns 5xx.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Embedding cache file, read before and written after the run.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    #[arg(long, short, default_value_t = DEFAULT_TOPIC_COUNT)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Undersample {
    None,
    DropIntro,
    RandomNegatives,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub pos_weight: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of labelled paragraphs held out the first time a model is trained.
    #[arg(long, default_value_t = DEFAULT_TEST_RATIO)]
    pub test_ratio: f64,
    #[arg(long, value_enum, default_value_t = Undersample::None)]
    pub undersample: Undersample,
    /// Paragraphs per session dropped by `drop-intro`.
    #[arg(long, default_value_t = tension_core::classifier::DEFAULT_DROP_INTRO)]
    pub drop_intro: usize,
    /// Share of negatives dropped by `random-negatives`.
    #[arg(long, default_value_t = 0.5)]
    pub drop_fraction: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluate on the paragraphs labelled in this CSV instead of the held-out split.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Decision threshold; defaults to the model's.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AlNextArgs {
    #[arg(long, default_value_t = DEFAULT_AL_BATCH)]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_AL_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct AlImportArgs {
    /// CSV files with columns paragraph_id,annotator_id,value,stage,timestamp.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Per-session speaker coverage.
    #[arg(long)]
    pub speakers: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<std::net::IpAddr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Directory for speaker_coverage.* and class_balance.*; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
