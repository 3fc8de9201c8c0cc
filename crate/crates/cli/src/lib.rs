//! Command-line pipeline: `link`, `extract`, `generate`, `evaluate`,
//! `bench` and `sample`. Stages exchange JSON files so each one can be
//! re-run and inspected on its own.

pub mod commands;
pub mod config;
pub mod tables;

use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};
use rationale_forge::dataset::Split;
use rationale_forge::http::{ReqwestTransport, Transport};
use rationale_forge::retriever::GITHUB_API;

pub use config::{RunArgs, RunConfig};

pub const DEFAULT_LLM_BASE_URL: &str = "https://api.openai.com/v1";

/// Failure with the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn retrieval(m: impl Into<String>) -> Self {
        Self { code: 2, message: m.into() }
    }
    pub fn model(m: impl Into<String>) -> Self {
        Self { code: 3, message: m.into() }
    }
    pub fn input(m: impl Into<String>) -> Self {
        Self { code: 4, message: m.into() }
    }
    pub fn schema(m: impl Into<String>) -> Self {
        Self { code: 5, message: m.into() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rationale-forge", version, about = "Recover and summarize the rationale behind a commit")]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect the artifacts linked to a commit into a graph file
    Link {
        /// owner/name
        repo: String,
        sha: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Label the sentences of a graph with Goal, Need and Alternatives
    Extract {
        graph: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the rendered prompt here
        #[arg(long)]
        prompt_out: Option<PathBuf>,
    },
    /// Summarize labeled sentences per component
    Generate {
        labels: PathBuf,
        /// Report record (JSON)
        #[arg(long, short)]
        out: PathBuf,
        /// Markdown rendering [default: <out> with .md extension]
        #[arg(long)]
        markdown: Option<PathBuf>,
        #[arg(long)]
        prompt_out: Option<PathBuf>,
    },
    /// Score labels files against a ground-truth corpus
    Evaluate {
        /// Labels files written by `extract`
        predictions: Vec<PathBuf>,
        #[arg(long, required_unless_present = "table_check")]
        corpus: Option<PathBuf>,
        /// Human IC/EI ratings of generated summaries (JSON list)
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Recompute the F2 cells of a published-tables file instead
        #[arg(long, conflicts_with_all = ["corpus", "ratings"])]
        table_check: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compare strategies and models on a corpus
    Bench {
        #[arg(long, required_unless_present = "verify_ri")]
        corpus: Option<PathBuf>,
        /// Comma-separated identification strategies; the first is the baseline
        #[arg(long, value_delimiter = ',', default_value = "ci-fs,ci-rfs")]
        strategies: Vec<String>,
        /// Comma-separated provider:model-id list [default: --model]
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, default_value = "eval")]
        split: Split,
        /// Recompute the relative-improvement cells of a published-tables file
        #[arg(long, conflicts_with = "corpus")]
        verify_ri: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Filter candidate commits and draw a stratified sample
    Sample {
        /// JSON list of {commit, atomic}
        candidates: PathBuf,
        /// project=count, repeatable
        #[arg(long = "quota", value_parser = parse_quota)]
        quotas: Vec<(String, usize)>,
        /// IQR fence multiplier
        #[arg(long, default_value_t = 1.5)]
        k: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn parse_quota(raw: &str) -> Result<(String, usize), String> {
    let (p, n) = raw.split_once('=').ok_or_else(|| format!("`{raw}` is not project=count"))?;
    Ok((p.to_string(), n.parse().map_err(|e| format!("`{n}`: {e}"))?))
}

/// Live endpoints. Tests substitute scripted transports.
pub struct Services {
    pub platform: Option<Box<dyn Transport>>,
    pub platform_base_url: String,
    pub llm: Option<Box<dyn Transport>>,
    pub llm_base_url: String,
    pub sleep: fn(Duration),
}

impl Services {
    /// Read `RF_PLATFORM_TOKEN`, `RF_PLATFORM_BASE_URL`, `RF_LLM_API_KEY`
    /// and `RF_LLM_BASE_URL`. Transports exist only when a credential is set.
    pub fn from_env() -> Result<Self, CliError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let transport = |key: Option<String>| -> Result<Option<Box<dyn Transport>>, CliError> {
            key.map(|k| {
                ReqwestTransport::new(Some(k), Duration::from_secs(60))
                    .map(|t| Box::new(t) as Box<dyn Transport>)
                    .map_err(|e| CliError::input(e.to_string()))
            })
            .transpose()
        };
        Ok(Self {
            platform: transport(var("RF_PLATFORM_TOKEN"))?,
            platform_base_url: var("RF_PLATFORM_BASE_URL").unwrap_or_else(|| GITHUB_API.to_string()),
            llm: transport(var("RF_LLM_API_KEY"))?,
            llm_base_url: var("RF_LLM_BASE_URL").unwrap_or_else(|| DEFAULT_LLM_BASE_URL.to_string()),
            sleep: std::thread::sleep,
        })
    }

    /// No live endpoints; only replay works.
    pub fn offline() -> Self {
        Self {
            platform: None,
            platform_base_url: GITHUB_API.to_string(),
            llm: None,
            llm_base_url: DEFAULT_LLM_BASE_URL.to_string(),
            sleep: std::thread::sleep,
        }
    }
}

pub fn run(cli: Cli, services: Services) -> Result<(), CliError> {
    let cfg = RunConfig::load(&cli.run)?;
    tracing::debug!(?cfg, "resolved configuration");
    match cli.command {
        Command::Link { repo, sha, out } => commands::cmd_link(&cfg, services, &repo, &sha, &out),
        Command::Extract { graph, out, prompt_out } => commands::cmd_extract(&cfg, services, &graph, &out, prompt_out.as_deref()),
        Command::Generate { labels, out, markdown, prompt_out } => {
            let markdown = markdown.unwrap_or_else(|| out.with_extension("md"));
            commands::cmd_generate(&cfg, services, &labels, &out, &markdown, prompt_out.as_deref())
        }
        Command::Evaluate { table_check: Some(tables), out, .. } => commands::cmd_table_check(&tables, &out),
        Command::Evaluate { predictions, corpus, ratings, out, .. } => {
            let corpus = corpus.expect("clap requires --corpus");
            commands::cmd_evaluate(&predictions, &corpus, ratings.as_deref(), &out)
        }
        Command::Bench { verify_ri: Some(tables), out, .. } => commands::cmd_verify_ri(&tables, &out),
        Command::Bench { corpus, strategies, models, split, out, .. } => {
            let corpus = corpus.expect("clap requires --corpus");
            commands::cmd_bench(&cfg, services, &corpus, &strategies, &models, split, &out)
        }
        Command::Sample { candidates, quotas, k, out } => commands::cmd_sample(&cfg, &candidates, &quotas, k, &out),
    }
}
