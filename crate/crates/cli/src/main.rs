mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lyrics_audit::{Attribute, PromptId, StratumSize};

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing arguments; exit 2.
    Usage(String),
    /// A pipeline stage failed; exit 1.
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "lyrics-audit", version, about = "Fairness audit of LLM author profiling on song lyrics")]
pub struct Cli {
    /// `key = value` file with defaults for seed, iterations, endpoint, ...
    #[arg(long, global = true, env = "AUDIT_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Inputs {
    #[arg(long)]
    pub songs: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct Resampling {
    /// Seed for every random draw. Required whenever resampling happens.
    #[arg(long, env = "AUDIT_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Draws per stratum: an integer count, or a fraction in (0, 1].
    #[arg(long, value_parser = parse_stratum)]
    pub stratum_n: Option<StratumSize>,
}

#[derive(Args, Debug, Clone)]
pub struct Cell {
    #[arg(long, value_parser = parse_attribute)]
    pub attribute: Option<Attribute>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = parse_prompt)]
    pub prompt: Option<PromptId>,
}

#[derive(Args, Debug, Clone)]
pub struct Remote {
    #[arg(long, env = "AUDIT_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "AUDIT_MODEL")]
    pub model: Option<String>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Append every request and response to this JSON-lines file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Use the legacy completions endpoint instead of chat completions.
    #[arg(long)]
    pub completions: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a song table, or split a released results table into songs and predictions.
    Ingest {
        #[arg(long, conflicts_with = "released")]
        songs: Option<PathBuf>,
        #[arg(long, requires = "mapping")]
        released: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Output file (songs) or directory (released tables).
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop near-duplicate titles within each artist.
    Dedup {
        #[arg(long)]
        songs: PathBuf,
        #[arg(long, default_value_t = lyrics_audit::corpus_prep::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the merge report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Flag songs whose lyrics need translation.
    Langid {
        #[arg(long)]
        songs: PathBuf,
        /// English word list, one word per line.
        #[arg(long)]
        vocabulary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translate flagged lyrics through the model endpoint.
    Translate {
        #[arg(long)]
        songs: PathBuf,
        #[command(flatten)]
        remote: Remote,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a profiling prompt over every song.
    Infer {
        #[arg(long)]
        songs: PathBuf,
        #[command(flatten)]
        remote: Remote,
        #[arg(long, value_parser = parse_prompt)]
        prompt: PromptId,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        max_tokens: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-parse stored raw responses.
    Parse {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw an equal number of songs per modality.
    Balance {
        #[arg(long)]
        songs: PathBuf,
        #[arg(long, value_parser = parse_attribute)]
        attribute: Attribute,
        /// Songs per modality; defaults to the smallest modality size.
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, env = "AUDIT_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric table with bootstrap intervals.
    Metrics {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        cell: Cell,
        #[command(flatten)]
        resampling: Resampling,
        /// Evaluate on a seeded balanced subset of the songs.
        #[arg(long)]
        balanced: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chi-squared, CLT and Wasserstein tests against uniform predictions.
    Tests {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        cell: Cell,
        #[command(flatten)]
        resampling: Resampling,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        balanced: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlations between attribute scores and predicted modalities.
    Correlate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        cell: Cell,
        #[command(flatten)]
        resampling: Resampling,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error-conditioned term divergence and accuracy by covariate bucket.
    Rationales {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        cell: Cell,
        #[command(flatten)]
        resampling: Resampling,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every table for every cell, plus a JSON bundle.
    Report {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_parser = parse_attribute)]
        attribute: Option<Attribute>,
        #[command(flatten)]
        resampling: Resampling,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_attribute(s: &str) -> Result<Attribute, String> {
    s.parse().map_err(|e: lyrics_audit::data_model::DataError| e.to_string())
}

fn parse_prompt(s: &str) -> Result<PromptId, String> {
    s.parse().map_err(|e: lyrics_audit::data_model::DataError| e.to_string())
}

fn parse_stratum(s: &str) -> Result<StratumSize, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Stage { stage, message }) => {
            eprintln!("error: stage `{stage}` failed: {message}");
            ExitCode::from(1)
        }
    }
}
