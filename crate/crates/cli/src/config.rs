use std::path::{Path, PathBuf};

use rationale_forge::extractor::{PromptStrategy, VotingPolicy, DEFAULT_PROMPT_BUDGET};
use rationale_forge::http::CacheMode;
use rationale_forge::llm::ModelSpec;
use serde::Deserialize;

use crate::CliError;

pub const CONFIG_FILE: &str = "rationale-forge.toml";
pub const DEFAULT_MODEL: &str = "openai:o4-mini";
pub const DEFAULT_CACHE_DIR: &str = ".rf-cache";

/// Contents of `rationale-forge.toml`. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub cache_dir: Option<PathBuf>,
    pub mode: Option<String>,
    pub model: Option<String>,
    /// Used by `extract`.
    pub ci_strategy: Option<String>,
    /// Used by `generate`.
    pub cg_strategy: Option<String>,
    pub runs: Option<u32>,
    pub threshold: Option<u32>,
    pub parallelism: Option<usize>,
    pub token_budget: Option<usize>,
    pub seed: Option<u64>,
    pub exemplars: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))
    }
}

/// Flag values; `None` defers to the config file, then to the default.
#[derive(Debug, Clone, Default, PartialEq, Eq, clap::Args)]
pub struct RunArgs {
    /// Config file [default: ./rationale-forge.toml when present]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// record, replay or live
    #[arg(long, global = true)]
    pub mode: Option<CacheMode>,
    /// provider:model-id
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub strategy: Option<PromptStrategy>,
    #[arg(long, global = true)]
    pub runs: Option<u32>,
    #[arg(long, global = true)]
    pub threshold: Option<u32>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Prompt size cap in characters
    #[arg(long, global = true)]
    pub token_budget: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory of exemplar commits [default: bundled pack]
    #[arg(long, global = true)]
    pub exemplars: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub cache_dir: PathBuf,
    pub mode: CacheMode,
    pub model: ModelSpec,
    pub ci_strategy: PromptStrategy,
    pub cg_strategy: PromptStrategy,
    pub voting: VotingPolicy,
    pub parallelism: usize,
    pub token_budget: usize,
    pub seed: u64,
    pub exemplars: Option<PathBuf>,
}

pub fn parse_model(raw: &str) -> Result<ModelSpec, CliError> {
    match raw.split_once(':') {
        Some((p, m)) if !p.is_empty() && !m.is_empty() => Ok(ModelSpec::new(p, m)),
        _ => Err(CliError::input(format!("model `{raw}` is not of the form provider:model-id"))),
    }
}

fn parse_strategy(raw: &str) -> Result<PromptStrategy, CliError> {
    raw.parse().map_err(CliError::schema)
}

impl RunConfig {
    /// Merge flags over `file`. `--strategy` replaces whichever of the two
    /// strategies its kind names.
    pub fn resolve(args: &RunArgs, file: &FileConfig) -> Result<Self, CliError> {
        let mode = match (&args.mode, &file.mode) {
            (Some(m), _) => *m,
            (None, Some(m)) => m.parse().map_err(CliError::schema)?,
            (None, None) => CacheMode::Replay,
        };
        let model = parse_model(args.model.as_deref().or(file.model.as_deref()).unwrap_or(DEFAULT_MODEL))?;
        let mut ci_strategy = file.ci_strategy.as_deref().map(parse_strategy).transpose()?.unwrap_or(PromptStrategy::CiRfs);
        let mut cg_strategy = file.cg_strategy.as_deref().map(parse_strategy).transpose()?.unwrap_or(PromptStrategy::CgFs);
        if !ci_strategy.is_identification() {
            return Err(CliError::schema(format!("ci-strategy must be an identification strategy, got {ci_strategy}")));
        }
        if cg_strategy.is_identification() {
            return Err(CliError::schema(format!("cg-strategy must be a generation strategy, got {cg_strategy}")));
        }
        match args.strategy {
            Some(s) if s.is_identification() => ci_strategy = s,
            Some(s) => cg_strategy = s,
            None => {}
        }
        let defaults = VotingPolicy::default();
        let runs = args.runs.or(file.runs).unwrap_or(defaults.runs);
        let threshold = args.threshold.or(file.threshold).unwrap_or(defaults.threshold);
        let voting = VotingPolicy::new(runs, threshold).map_err(|e| CliError::input(e.to_string()))?;
        let parallelism = args.parallelism.or(file.parallelism).unwrap_or(4);
        if parallelism == 0 {
            return Err(CliError::input("parallelism must be at least 1"));
        }
        let cfg = Self {
            cache_dir: args.cache_dir.clone().or_else(|| file.cache_dir.clone()).unwrap_or_else(|| DEFAULT_CACHE_DIR.into()),
            mode,
            model,
            ci_strategy,
            cg_strategy,
            voting,
            parallelism,
            token_budget: args.token_budget.or(file.token_budget).unwrap_or(DEFAULT_PROMPT_BUDGET),
            seed: args.seed.or(file.seed).unwrap_or(0),
            exemplars: args.exemplars.clone().or_else(|| file.exemplars.clone()),
        };
        if cfg.mode == CacheMode::Replay && !cfg.cache_dir.is_dir() {
            return Err(CliError::input(format!("replay mode needs an existing cache directory, {} is missing", cfg.cache_dir.display())));
        }
        Ok(cfg)
    }

    /// Load `--config`, or `./rationale-forge.toml` when present, and merge.
    pub fn load(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None if Path::new(CONFIG_FILE).is_file() => FileConfig::load(Path::new(CONFIG_FILE))?,
            None => FileConfig::default(),
        };
        Self::resolve(args, &file)
    }
}
