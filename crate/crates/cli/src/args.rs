use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Batch pipeline for scoring political posts on anti-democratic attitudes
/// and building ranked experiment feeds.
///
/// Settings resolve as: command-line flags, then the `--config` file, then
/// `DEMFEED_*` environment variables, then built-in defaults. API tokens are
/// read only from the environment (`DEMFEED_API_KEY` or `OPENAI_API_KEY`).
///
/// Exit codes: 0 success, 1 validation error, 2 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "demfeed", version)]
pub struct Cli {
    /// Settings file (TOML, or JSON by `.json` extension).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a CrowdTangle CSV or JSON export into a corpus JSONL file.
    Ingest(IngestArgs),
    /// Draw an engagement-stratified sample, optionally split into dev/test.
    Sample(SampleArgs),
    /// Rate every post on all eight variables with an LLM backend.
    Rate(RateArgs),
    /// Validate a manual annotation file and write a clean score column.
    ImportAnnotations(ImportArgs),
    /// Compare two score columns (the first is treated as truth).
    Agreement(AgreementArgs),
    /// Build the ranked feed for one experimental condition.
    Rank(RankArgs),
    /// Run the experiment HTTP service.
    Serve(ServeArgs),
    /// Dump sessions and events from a service data directory.
    ExportEvents(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    CrowdtangleCsv,
    GenericJson,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Source export (`.csv` for CrowdTangle, `.json`/`.jsonl` for generic).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Override format detection by extension.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Corpus JSONL to write [default: configured corpus path].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Keep only posts from politics-related page categories.
    #[arg(long)]
    pub political_only: bool,
    /// Write the ingest report (row counts) as JSON here instead of stderr.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Corpus JSONL [default: configured corpus path].
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Number of engagement buckets.
    #[arg(long, value_name = "N")]
    pub buckets: usize,
    /// Posts drawn from each bucket.
    #[arg(long, value_name = "N")]
    pub per_bucket: usize,
    /// Sampling seed [default: configured seed, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample JSONL, in bucket-major order.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also split the sample: this many posts go to `--dev-out`.
    #[arg(long, value_name = "N", requires_all = ["dev_out", "test_out"])]
    pub dev_size: Option<usize>,
    /// Development split JSONL (needs `--dev-size`).
    #[arg(long, value_name = "FILE", requires = "dev_size")]
    pub dev_out: Option<PathBuf>,
    /// Test split JSONL, the rest of the sample (needs `--dev-size`).
    #[arg(long, value_name = "FILE", requires = "dev_size")]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Corpus JSONL [default: configured corpus path].
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Chat backend [default: configured backend, else mock].
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Score column to write (`.csv` or `.jsonl`; JSONL keeps reasons).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Replay archive answering requests for `--backend replay`.
    #[arg(long, value_name = "FILE")]
    pub fixture: Option<PathBuf>,
    /// Record every backend reply into this replay archive.
    #[arg(long, value_name = "FILE")]
    pub record: Option<PathBuf>,
    /// Rating cache; read before calling the backend and rewritten after.
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
    /// Maximum requests in flight [default: 4].
    #[arg(long, value_name = "N")]
    pub concurrency: Option<usize>,
    /// Chat model id [default: gpt-4-0314].
    #[arg(long, value_name = "ID")]
    pub model: Option<String>,
    /// Sampling temperature in [0, 2] [default: 0.7].
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Prompt template version [default: v1].
    #[arg(long, value_name = "VERSION")]
    pub prompt_version: Option<String>,
    /// Rater id stored in the column [default: the model id].
    #[arg(long, value_name = "ID")]
    pub rater_id: Option<String>,
    /// Accept only the exact `Rating: N ### Reason: text` reply shape.
    #[arg(long)]
    pub strict: bool,
    /// Live backend request budget per minute [default: 60].
    #[arg(long, value_name = "N")]
    pub requests_per_minute: Option<u32>,
    /// Write the failure report as JSON here instead of stderr.
    #[arg(long, value_name = "FILE")]
    pub failures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Annotation CSV (`post_id, v1..v8[, rater_id]`) or JSONL.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Rater id for the column.
    #[arg(long, value_name = "ID", default_value = "manual")]
    pub rater_id: String,
    /// Corpus used to reject unknown post ids [default: configured corpus path, if any].
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Clean column to write (`.csv` or `.jsonl`).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Write rejected rows as JSON here instead of stderr.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaChoice {
    Ordinal,
    Interval,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Reference column (`.csv` or `.jsonl`), treated as truth.
    #[arg(long, value_name = "FILE")]
    pub a: PathBuf,
    /// Column compared against the reference.
    #[arg(long, value_name = "FILE")]
    pub b: PathBuf,
    /// Report destination [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    /// Distance used by Krippendorff's alpha.
    #[arg(long, value_enum, default_value = "ordinal")]
    pub alpha_metric: AlphaChoice,
    /// Corpus used to reject unknown post ids [default: configured corpus path, if any].
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// One of downranking, content_warning, remove_and_replace, engagement,
    /// ideologically_balanced, chronological, null_control.
    #[arg(long)]
    pub condition: String,
    /// Score column (`.csv` or `.jsonl`) [default: configured scores path].
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    /// Post inventory JSONL [default: configured corpus path].
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Ranked feed JSON to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the per-slot audit manifest JSON here.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Posts per feed [default: 60].
    #[arg(long, value_name = "N")]
    pub feed_size: Option<usize>,
    /// Totals at or above this are anti-democratic [default: 12].
    #[arg(long, value_name = "TOTAL")]
    pub threshold: Option<u8>,
    /// Replacement posts must total at most this [default: 9].
    #[arg(long, value_name = "TOTAL")]
    pub replacement_ceiling: Option<u8>,
    /// Seed for the balanced feed's starting side [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feed timestamp (RFC 3339) [default: newest post in the inventory].
    #[arg(long, value_name = "TIME")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Experiment configuration (TOML, or JSON by extension).
    #[arg(long, value_name = "FILE")]
    pub experiment: PathBuf,
    /// Address to bind [default: from the experiment file].
    #[arg(long)]
    pub bind: Option<String>,
    /// Port to listen on; 0 picks a free port [default: from the experiment file].
    #[arg(long)]
    pub port: Option<u16>,
    /// Event store directory [default: from the experiment file].
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Event store directory [default: configured data dir].
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Only sessions assigned to this condition.
    #[arg(long)]
    pub condition: Option<String>,
    /// Only sessions assigned at or after this time (RFC 3339).
    #[arg(long, value_name = "TIME")]
    pub from: Option<String>,
    /// Only sessions assigned at or before this time (RFC 3339).
    #[arg(long, value_name = "TIME")]
    pub to: Option<String>,
    /// NDJSON destination [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
