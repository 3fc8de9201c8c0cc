use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rationale_forge::dataset::{filter_commits, load_corpus, stratified_sample, CommitCandidate, GroundTruthRecord, RemovalReason, Split};
use rationale_forge::eval::{classification_report, krippendorff_alpha, summary_f2, ClassificationReport, SizeFilterStats, SummaryQualityScore};
use rationale_forge::extractor::{
    build_identification_prompt, bundled_exemplars, classify, load_exemplars, majority_vote, ExemplarCommit, ExtractError, PromptAssets,
    PromptStrategy, RunSet, SentenceTable, VotingPolicy,
};
use rationale_forge::generator::{build_generation_prompt, generate, GenerateError};
use rationale_forge::http::{CacheMode, HttpError, HttpRequest, HttpResponse, RecordReplay, TokenBucket, Transport};
use rationale_forge::llm::{Gateway, ModelSpec, OpenAiCompatible};
use rationale_forge::model::{Commit, CommitSha, LabeledSentence, RationaleComponent};
use rationale_forge::retriever::{fetch_sources, resolve_commit_artifacts, ArtifactGraph, GitHubClient, PlatformClient, ResolveOptions, RetrievalError};
use rationale_forge::segment::SegmenterConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_model, RunConfig};
use crate::tables::{check_relative_improvement, check_tables, PublishedTables, TableCheckReport};
use crate::{CliError, Services};

/// Output of `extract`, input of `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub commit: Commit,
    pub strategy: PromptStrategy,
    pub model: ModelSpec,
    pub voting: VotingPolicy,
    pub runs: RunSet,
    /// Krippendorff alpha across runs, per component.
    pub run_agreement: BTreeMap<RationaleComponent, Option<f64>>,
    pub labeled_sentences: Vec<LabeledSentence>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn extract_error(e: ExtractError) -> CliError {
    match e {
        ExtractError::Gateway(_) | ExtractError::Unparseable { .. } => CliError::model(e.to_string()),
        ExtractError::Exemplars(_) => CliError::schema(e.to_string()),
        _ => CliError::input(e.to_string()),
    }
}

fn generate_error(e: GenerateError) -> CliError {
    match e {
        GenerateError::NoRationaleInput => CliError::input(e.to_string()),
        GenerateError::Prompt(inner) => extract_error(inner),
        _ => CliError::model(e.to_string()),
    }
}

fn retrieval_error(e: RetrievalError) -> CliError {
    CliError::retrieval(e.to_string())
}

/// Lets several gateways use one live transport.
struct SharedTransport(Arc<dyn Transport>);

impl Transport for SharedTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError> {
        self.0.send(req)
    }
}

struct Llm {
    transport: Option<Arc<dyn Transport>>,
    base_url: String,
    sleep: fn(std::time::Duration),
}

impl Llm {
    fn new(services: Services) -> Self {
        Self { transport: services.llm.map(Arc::from), base_url: services.llm_base_url, sleep: services.sleep }
    }

    fn gateway(&self, cfg: &RunConfig) -> Result<Gateway, CliError> {
        let backend = match (cfg.mode, &self.transport) {
            (CacheMode::Replay, _) => None,
            (_, None) => return Err(CliError::input(format!("{} mode needs RF_LLM_API_KEY", cfg.mode))),
            (_, Some(t)) => Some(Box::new(OpenAiCompatible::new(Box::new(SharedTransport(t.clone())), self.base_url.clone())) as _),
        };
        Ok(Gateway::new(&cfg.cache_dir, cfg.mode, backend).with_sleep(self.sleep))
    }
}

fn assets(cfg: &RunConfig) -> PromptAssets {
    PromptAssets { budget: cfg.token_budget, ..PromptAssets::default() }
}

fn exemplars(cfg: &RunConfig, strategy: PromptStrategy) -> Result<Vec<ExemplarCommit>, CliError> {
    let all = match &cfg.exemplars {
        Some(dir) => load_exemplars(dir).map_err(extract_error)?,
        None => bundled_exemplars(),
    };
    let n = strategy.exemplar_count();
    if all.len() < n {
        return Err(CliError::input(format!("strategy {strategy} needs {n} exemplar commits, the pack has {}", all.len())));
    }
    Ok(all.into_iter().take(n).collect())
}

pub fn cmd_link(cfg: &RunConfig, services: Services, repo: &str, sha: &str, out: &Path) -> Result<(), CliError> {
    let sha = CommitSha::new(sha).map_err(|e| CliError::input(e.to_string()))?;
    if !repo.contains('/') {
        return Err(CliError::input(format!("repository `{repo}` is not of the form owner/name")));
    }
    let inner = match (cfg.mode, services.platform) {
        (CacheMode::Replay, _) => None,
        (_, None) => return Err(CliError::input(format!("{} mode needs RF_PLATFORM_TOKEN", cfg.mode))),
        (_, Some(t)) => Some(t),
    };
    let transport = RecordReplay::new(&cfg.cache_dir, cfg.mode, inner).with_rate_limit(TokenBucket::new(5.0, 20));
    let client = GitHubClient::new(Box::new(transport), services.platform_base_url).with_sleep(services.sleep);
    let commit = client.commit(repo, &sha).map_err(retrieval_error)?;
    let opts = ResolveOptions { parallelism: cfg.parallelism, ..ResolveOptions::default() };
    let mut graph = resolve_commit_artifacts(&commit, &client, opts).map_err(retrieval_error)?;
    let sources = fetch_sources(&commit, &client).map_err(retrieval_error)?;
    graph.attach_code_comments(&sources).map_err(|e| CliError::retrieval(e.to_string()))?;
    graph.validate().map_err(CliError::schema)?;
    write_text(out, &graph.to_json())?;
    println!("{:<22} {:<40} {:>6}  title", "kind", "locator", "blocks");
    for a in &graph.artifacts {
        println!("{:<22} {:<40} {:>6}  {}", a.reference.kind.label(), a.reference.locator, a.body_blocks.len(), a.title);
    }
    println!("{} artifacts, {} links", graph.artifacts.len(), graph.edges.len());
    Ok(())
}

fn alpha_by_component(per_commit: &[&RunSet]) -> BTreeMap<RationaleComponent, Option<f64>> {
    RationaleComponent::TARGETS
        .iter()
        .map(|&c| {
            let matrix: Vec<Vec<Option<bool>>> = per_commit
                .iter()
                .flat_map(|runs| {
                    let ids: BTreeSet<_> = runs.per_run.iter().flat_map(|r| r.keys().copied()).collect();
                    ids.into_iter()
                        .map(|id| runs.per_run.iter().map(|r| r.get(&id).map(|s| s.contains(&c))).collect())
                        .collect::<Vec<_>>()
                })
                .collect();
            (c, krippendorff_alpha(&matrix).ok().flatten())
        })
        .collect()
}

pub fn cmd_extract(cfg: &RunConfig, services: Services, graph: &Path, out: &Path, prompt_out: Option<&Path>) -> Result<(), CliError> {
    let graph: ArtifactGraph = read_json(graph)?;
    graph.validate().map_err(CliError::schema)?;
    let strategy = cfg.ci_strategy;
    let exemplars = exemplars(cfg, strategy)?;
    let assets = assets(cfg);
    let table = SentenceTable::from_artifacts(&graph.artifacts, &SegmenterConfig::default());
    if let Some(p) = prompt_out {
        let prompt = build_identification_prompt(&graph.commit, &table, strategy, &exemplars, &assets).map_err(extract_error)?;
        write_text(p, &prompt.render())?;
    }
    let gateway = Llm::new(services).gateway(cfg)?;
    let runs = classify(&graph.commit, &table, strategy, &exemplars, &assets, cfg.voting, &gateway, &cfg.model).map_err(extract_error)?;
    let labeled = majority_vote(&runs, cfg.voting, &table);
    let file = LabelsFile {
        commit: graph.commit,
        strategy,
        model: cfg.model.clone(),
        voting: cfg.voting,
        run_agreement: alpha_by_component(&[&runs]),
        runs,
        labeled_sentences: labeled,
    };
    write_text(out, &to_json(&file))?;
    let labeled = file.labeled_sentences.iter().filter(|l| !l.labels.is_empty()).count();
    println!("{} sentences, {labeled} labeled ({strategy}, {} runs, threshold {})", file.labeled_sentences.len(), cfg.voting.runs, cfg.voting.threshold);
    Ok(())
}

pub fn cmd_generate(
    cfg: &RunConfig,
    services: Services,
    labels: &Path,
    out: &Path,
    markdown: &Path,
    prompt_out: Option<&Path>,
) -> Result<(), CliError> {
    let file: LabelsFile = read_json(labels)?;
    let strategy = cfg.cg_strategy;
    let exemplars = exemplars(cfg, strategy)?;
    let assets = assets(cfg);
    if let Some(p) = prompt_out {
        let prompt = build_generation_prompt(&file.commit, &file.labeled_sentences, strategy, &exemplars, &assets).map_err(generate_error)?;
        write_text(p, &prompt.render())?;
    }
    let gateway = Llm::new(services).gateway(cfg)?;
    let report = generate(&file.commit, &file.labeled_sentences, strategy, &exemplars, &assets, &gateway, &cfg.model, 0).map_err(generate_error)?;
    report.validate(&file.labeled_sentences).map_err(CliError::schema)?;
    write_text(out, &report.to_json())?;
    write_text(markdown, &report.to_markdown(&file.labeled_sentences))?;
    let names: Vec<&str> = report.summaries.keys().map(|c| c.name()).collect();
    println!("summaries: {}; {} warnings", names.join(", "), report.warnings.len());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(InputDigest { name, sha256: hex::encode(Sha256::digest(&bytes)) })
}

/// One human rating of a generated component summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub sha: String,
    pub component: RationaleComponent,
    pub ic: f64,
    pub ei: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedSummary {
    pub sha: String,
    pub component: RationaleComponent,
    pub score: SummaryQualityScore,
}

/// Per-commit scores plus F2 of the averaged IC and EI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryQuality {
    pub per_commit: Vec<RatedSummary>,
    pub per_component: BTreeMap<RationaleComponent, SummaryQualityScore>,
    pub overall: Option<SummaryQualityScore>,
}

fn mean_score(scores: &[SummaryQualityScore]) -> Result<Option<SummaryQualityScore>, CliError> {
    if scores.is_empty() {
        return Ok(None);
    }
    let n = scores.len() as f64;
    let ic = scores.iter().map(|s| s.ic).sum::<f64>() / n;
    let ei = scores.iter().map(|s| s.ei).sum::<f64>() / n;
    Ok(Some(SummaryQualityScore { ic, ei, f2: summary_f2(ic, ei).map_err(|e| CliError::input(e.to_string()))? }))
}

pub fn summary_quality(ratings: &[Rating]) -> Result<SummaryQuality, CliError> {
    let per_commit = ratings
        .iter()
        .map(|r| {
            SummaryQualityScore::new(r.ic, r.ei)
                .map(|score| RatedSummary { sha: r.sha.clone(), component: r.component, score })
                .map_err(|e| CliError::input(format!("rating for {} {}: {e}", r.sha, r.component)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut per_component = BTreeMap::new();
    for c in RationaleComponent::TARGETS {
        let scores: Vec<_> = per_commit.iter().filter(|r| r.component == c).map(|r| r.score).collect();
        if let Some(m) = mean_score(&scores)? {
            per_component.insert(c, m);
        }
    }
    let all: Vec<_> = per_commit.iter().map(|r| r.score).collect();
    Ok(SummaryQuality { overall: mean_score(&all)?, per_component, per_commit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub inputs: Vec<InputDigest>,
    pub per_commit: BTreeMap<String, ClassificationReport>,
    pub overall: ClassificationReport,
    pub run_agreement: BTreeMap<RationaleComponent, Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary_quality: Option<SummaryQuality>,
}

fn corpus_index(corpus: &Path) -> Result<BTreeMap<String, GroundTruthRecord>, CliError> {
    let records = load_corpus(corpus).map_err(|e| match e {
        rationale_forge::dataset::DatasetError::Io { .. } => CliError::input(e.to_string()),
        _ => CliError::schema(e.to_string()),
    })?;
    Ok(records.into_iter().map(|r| (r.commit.sha.to_string(), r)).collect())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", v * 100.0))
}

fn print_report(label: &str, r: &ClassificationReport) {
    for (c, s) in &r.per_component {
        println!("{label:<24} {:<13} {:>6} {:>6} {:>6}", c.name(), pct(s.precision), pct(s.recall), pct(s.f2));
    }
    println!("{label:<24} {:<13} {:>6} {:>6} {:>6}", "Overall", pct(r.overall.precision), pct(r.overall.recall), pct(r.overall.f2));
}

pub fn cmd_evaluate(predictions: &[std::path::PathBuf], corpus: &Path, ratings: Option<&Path>, out: &Path) -> Result<(), CliError> {
    if predictions.is_empty() {
        return Err(CliError::input("no prediction files given"));
    }
    let gold = corpus_index(corpus)?;
    let mut inputs = vec![digest(&corpus.join("index.json"))?];
    let mut per_commit = BTreeMap::new();
    let mut run_sets = Vec::new();
    for p in predictions {
        inputs.push(digest(p)?);
        let file: LabelsFile = read_json(p)?;
        let sha = file.commit.sha.to_string();
        let record = gold.get(&sha).ok_or_else(|| CliError::input(format!("{}: commit {sha} is not in the corpus", p.display())))?;
        let report = classification_report(&file.labeled_sentences, &record.labeled_sentences)
            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        if per_commit.insert(sha.clone(), report).is_some() {
            return Err(CliError::input(format!("commit {sha} is predicted twice")));
        }
        run_sets.push(file.runs);
    }
    let summary_quality = match ratings {
        Some(path) => {
            inputs.push(digest(path)?);
            Some(summary_quality(&read_json::<Vec<Rating>>(path)?)?)
        }
        None => None,
    };
    let metrics = MetricsFile {
        inputs,
        overall: ClassificationReport::pooled(per_commit.values()),
        run_agreement: alpha_by_component(&run_sets.iter().collect::<Vec<_>>()),
        per_commit,
        summary_quality,
    };
    write_text(out, &to_json(&metrics))?;
    print_report("pooled", &metrics.overall);
    Ok(())
}

fn print_checks(report: &TableCheckReport) {
    for c in report.f2.iter().chain(&report.summary_f2).chain(&report.relative_improvement) {
        let computed = c.computed.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<4} {:<26} {:<34} {:<13} reported {:>7} computed {:>8}",
            if c.pass { "ok" } else { "FAIL" },
            c.table,
            c.row,
            c.component,
            c.reported,
            computed
        );
    }
}

pub fn cmd_table_check(tables: &Path, out: &Path) -> Result<(), CliError> {
    let t: PublishedTables = read_json(tables)?;
    let report = TableCheckReport { relative_improvement: Vec::new(), ..check_tables(&t) };
    write_text(out, &to_json(&report))?;
    print_checks(&report);
    Ok(())
}

pub fn cmd_verify_ri(tables: &Path, out: &Path) -> Result<(), CliError> {
    let t: PublishedTables = read_json(tables)?;
    let report = TableCheckReport { relative_improvement: check_relative_improvement(&t.relative_improvement, &t.classification), ..Default::default() };
    write_text(out, &to_json(&report))?;
    print_checks(&report);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub model: String,
    pub strategy: PromptStrategy,
    pub report: ClassificationReport,
}

/// Relative improvement of a strategy over the baseline for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchImprovement {
    pub model: String,
    pub strategy: PromptStrategy,
    pub baseline: PromptStrategy,
    pub component: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFile {
    pub split: Split,
    pub commits: Vec<String>,
    pub cells: Vec<BenchCell>,
    pub relative_improvement: Vec<BenchImprovement>,
}

fn ri(new: Option<f64>, base: Option<f64>) -> Option<f64> {
    new.zip(base).and_then(|(n, b)| rationale_forge::eval::relative_improvement(n, b).ok())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_bench(
    cfg: &RunConfig,
    services: Services,
    corpus: &Path,
    strategies: &[String],
    models: &[String],
    split: Split,
    out: &Path,
) -> Result<(), CliError> {
    let strategies: Vec<PromptStrategy> = strategies.iter().map(|s| s.parse().map_err(CliError::input)).collect::<Result<_, _>>()?;
    if let Some(s) = strategies.iter().find(|s| !s.is_identification()) {
        return Err(CliError::input(format!("bench compares identification strategies, got {s}")));
    }
    if strategies.is_empty() {
        return Err(CliError::input("no strategies given"));
    }
    let models: Vec<ModelSpec> = if models.is_empty() { vec![cfg.model.clone()] } else { models.iter().map(|m| parse_model(m)).collect::<Result<_, _>>()? };
    let records: Vec<GroundTruthRecord> = corpus_index(corpus)?.into_values().filter(|r| r.split == split).collect();
    let llm = Llm::new(services);
    let gateway = llm.gateway(cfg)?;
    let assets = assets(cfg);
    let mut cells = Vec::new();
    for model in &models {
        for &strategy in &strategies {
            let ex = exemplars(cfg, strategy)?;
            let mut reports = Vec::new();
            for r in &records {
                let table = SentenceTable::from_sentences(r.labeled_sentences.iter().map(|l| &l.sentence));
                let runs = classify(&r.commit, &table, strategy, &ex, &assets, cfg.voting, &gateway, model).map_err(extract_error)?;
                let labeled = majority_vote(&runs, cfg.voting, &table);
                reports.push(classification_report(&labeled, &r.labeled_sentences).map_err(|e| CliError::schema(e.to_string()))?);
            }
            cells.push(BenchCell { model: format!("{}:{}", model.provider, model.model_id), strategy, report: ClassificationReport::pooled(&reports) });
        }
    }
    let mut improvements = Vec::new();
    for chunk in cells.chunks(strategies.len()) {
        let base = &chunk[0];
        for cell in &chunk[1..] {
            let mut rows: Vec<(String, _, _)> =
                cell.report.per_component.iter().map(|(c, s)| (c.name().to_string(), s, &base.report.per_component[c])).collect();
            rows.push(("Overall".into(), &cell.report.overall, &base.report.overall));
            for (component, new, old) in rows {
                improvements.push(BenchImprovement {
                    model: cell.model.clone(),
                    strategy: cell.strategy,
                    baseline: base.strategy,
                    component,
                    precision: ri(new.precision, old.precision),
                    recall: ri(new.recall, old.recall),
                    f2: ri(new.f2, old.f2),
                });
            }
        }
    }
    let file = BenchFile { split, commits: records.iter().map(|r| r.commit.sha.to_string()).collect(), cells, relative_improvement: improvements };
    write_text(out, &to_json(&file))?;
    for c in &file.cells {
        print_report(&format!("{} {}", c.model, c.strategy), &c.report);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub repo: String,
    pub sha: String,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFile {
    pub seed: u64,
    pub k: f64,
    pub kept: usize,
    pub removed: Vec<Removal>,
    pub file_count_stats: Option<SizeFilterStats>,
    pub loc_stats: Option<SizeFilterStats>,
    pub sample: Vec<Commit>,
}

pub fn cmd_sample(cfg: &RunConfig, candidates: &Path, quotas: &[(String, usize)], k: f64, out: &Path) -> Result<(), CliError> {
    let candidates: Vec<CommitCandidate> = read_json(candidates)?;
    let outcome = filter_commits(&candidates, k);
    let quotas: BTreeMap<String, usize> = quotas.iter().cloned().collect();
    let sample = stratified_sample(&outcome.kept, &quotas, cfg.seed).map_err(|e| CliError::input(e.to_string()))?;
    let file = SampleFile {
        seed: cfg.seed,
        k,
        kept: outcome.kept.len(),
        removed: outcome.removed.iter().map(|(c, reason)| Removal { repo: c.repo_slug.clone(), sha: c.sha.to_string(), reason: *reason }).collect(),
        file_count_stats: outcome.file_count_stats,
        loc_stats: outcome.loc_stats,
        sample,
    };
    write_text(out, &to_json(&file))?;
    println!("{} candidates, {} kept, {} sampled", candidates.len(), file.kept, file.sample.len());
    Ok(())
}
