//! Per-component rationale summaries with sentence-level citations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extractor::{diff_section, exemplar_header, push_section, ExemplarCommit, ExtractError, Prompt, PromptAssets, PromptStrategy, SentenceTable};
use crate::http::{write_atomic, CacheMode, HttpError, HttpRequest, Transport};
use crate::llm::{CompletionRequest, Gateway, GatewayError, ModelSpec};
use crate::model::{Commit, CommitSha, LabeledSentence, RationaleComponent, SentenceId};

pub const MAX_SUMMARY_SENTENCES: usize = 3;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("no input sentence carries a Goal, Need or Alternatives label")]
    NoRationaleInput,
    #[error(transparent)]
    Prompt(#[from] ExtractError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no component summary could be recovered from the model output, even after a repair prompt")]
    UnparseableOutput,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub text: String,
    pub supporting: Vec<SentenceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleReport {
    pub commit_sha: CommitSha,
    pub strategy: PromptStrategy,
    pub model: ModelSpec,
    pub summaries: BTreeMap<RationaleComponent, ComponentSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Extraction-target labels present in `labeled`.
pub fn input_components(labeled: &[LabeledSentence]) -> BTreeSet<RationaleComponent> {
    labeled.iter().flat_map(|l| l.labels.iter().copied()).filter(|c| c.is_extraction_target()).collect()
}

impl RationaleReport {
    /// Check component-key and supporting-id soundness against the input.
    pub fn validate(&self, labeled: &[LabeledSentence]) -> Result<(), String> {
        let table = SentenceTable::from_sentences(labeled.iter().map(|l| &l.sentence));
        let present = input_components(labeled);
        let keys: BTreeSet<_> = self.summaries.keys().copied().collect();
        if keys != present {
            return Err(format!("summary components {keys:?} differ from input components {present:?}"));
        }
        for (c, s) in &self.summaries {
            for id in &s.supporting {
                let ok = table
                    .get(*id)
                    .and_then(|sent| labeled.iter().find(|l| &l.sentence == sent))
                    .is_some_and(|l| l.labels.contains(c));
                if !ok {
                    return Err(format!("{c} cites {id}, which is not an input sentence labeled {c}"));
                }
            }
        }
        Ok(())
    }

    /// Markdown with one section per component and footnotes pointing at the
    /// cited artifacts.
    pub fn to_markdown(&self, labeled: &[LabeledSentence]) -> String {
        let table = SentenceTable::from_sentences(labeled.iter().map(|l| &l.sentence));
        let mut out = format!("# Rationale for {}\n\nStrategy `{}`, model `{}`.\n", self.commit_sha.short(), self.strategy, self.model.model_id);
        let mut cited = BTreeSet::new();
        for (c, s) in &self.summaries {
            out.push_str(&format!("\n## {c}\n\n{}", s.text.trim()));
            for id in &s.supporting {
                out.push_str(&format!("[^{id}]"));
                cited.insert(*id);
            }
            out.push('\n');
        }
        if !cited.is_empty() {
            out.push('\n');
        }
        for id in cited {
            let Some(sent) = table.get(id) else { continue };
            let target = if sent.artifact.url.is_empty() { sent.artifact.display_name() } else { format!("[{}]({})", sent.artifact.display_name(), sent.artifact.url) };
            out.push_str(&format!("[^{id}]: {target}, sentence {}: \"{}\"\n", sent.ordinal + 1, sent.text.split_whitespace().collect::<Vec<_>>().join(" ")));
        }
        if !self.warnings.is_empty() {
            out.push_str("\n## Warnings\n\n");
            for w in &self.warnings {
                out.push_str(&format!("- {w}\n"));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

const CG_SYSTEM: &str = "You write short, factual summaries of why a code change was made. Use only the sentences you are given and cite them by id.";

const CG_TASK: &str = "The sentences below were taken from the artifacts linked to one commit and labeled with the rationale components they express. Write one summary per requested component, drawing only on the sentences labeled with that component.";

fn cg_output_format(components: &BTreeSet<RationaleComponent>) -> String {
    let names: Vec<&str> = components.iter().map(|c| c.name()).collect();
    format!(
        "Write summaries for exactly these components: {}. Do not write a section for any other component.\n\
Return one fenced code block. For each component write a heading line `### <Component>`, then a summary of at most {MAX_SUMMARY_SENTENCES} sentences, then a line `Sources: <ids>` listing the ids of the sentences the summary is based on, separated by commas.",
        names.join(", ")
    )
}

fn labeled_listing(table: &SentenceTable, labeled: &[LabeledSentence]) -> String {
    let mut body = String::new();
    for (i, r, sentences) in table.groups() {
        let mut group = String::new();
        for (j, s) in sentences.iter().enumerate() {
            let Some(l) = labeled.iter().find(|l| &l.sentence == s) else { continue };
            let names: Vec<&str> = l.labels.iter().filter(|c| c.is_extraction_target()).map(|c| c.name()).collect();
            if names.is_empty() {
                continue;
            }
            group.push_str(&format!("a{i}s{j} [{}]: {}\n", names.join(", "), s.text.split_whitespace().collect::<Vec<_>>().join(" ")));
        }
        if !group.is_empty() {
            body.push_str(&format!("### a{i}: {}\n{group}", r.display_name()));
        }
    }
    body
}

/// Only sentences carrying at least one extraction-target label, in input
/// order, restricted to those labels.
fn rationale_sentences(labeled: &[LabeledSentence]) -> Vec<LabeledSentence> {
    labeled
        .iter()
        .filter_map(|l| {
            let labels: BTreeSet<_> = l.labels.iter().copied().filter(|c| c.is_extraction_target()).collect();
            (!labels.is_empty()).then(|| LabeledSentence { sentence: l.sentence.clone(), labels })
        })
        .collect()
}

/// Generation prompt. Only sentences carrying a target label are listed, but
/// their ids are those of the full input grouped by artifact in input order,
/// so citations match the extraction stage.
pub fn build_generation_prompt(
    commit: &Commit,
    labeled: &[LabeledSentence],
    strategy: PromptStrategy,
    exemplars: &[ExemplarCommit],
    assets: &PromptAssets,
) -> Result<Prompt, GenerateError> {
    if !matches!(strategy, PromptStrategy::CgZs | PromptStrategy::CgFs) {
        return Err(ExtractError::WrongStrategy(strategy).into());
    }
    if exemplars.len() != strategy.exemplar_count() {
        return Err(ExtractError::ExemplarCount { strategy, expected: strategy.exemplar_count(), got: exemplars.len() }.into());
    }
    let focus = rationale_sentences(labeled);
    let components = input_components(&focus);
    if components.is_empty() {
        return Err(GenerateError::NoRationaleInput);
    }
    let table = SentenceTable::from_sentences(labeled.iter().map(|l| &l.sentence));
    let mut user = String::new();
    push_section(&mut user, "Task", CG_TASK);
    push_section(&mut user, "Rationale components", &assets.definitions);
    if !exemplars.is_empty() {
        let mut body = String::new();
        for (k, ex) in exemplars.iter().enumerate() {
            if k > 0 {
                body.push('\n');
            }
            body.push_str(&exemplar_header(k + 1, ex));
            let ex_table = SentenceTable::from_sentences(ex.sentences.iter().map(|l| &l.sentence));
            body.push_str(&labeled_listing(&ex_table, &ex.sentences));
            body.push_str("Reference summaries:\n");
            for (c, text) in &ex.reference_summaries {
                body.push_str(&format!("{c}: {}\n", text.trim()));
            }
        }
        push_section(&mut user, "Worked examples", &body);
    }
    push_section(&mut user, &format!("Commit diff ({}@{})", commit.repo_slug, commit.sha.short()), &diff_section(commit));
    push_section(&mut user, "Labeled sentences", &labeled_listing(&table, labeled));
    push_section(&mut user, "Output", &cg_output_format(&components));
    user.push('\n');
    Ok(Prompt { system_text: CG_SYSTEM.to_string(), user_text: user }.check_budget(assets.budget)?)
}

static SECTION_HEAD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:#{1,6}\s*|\*\*)?([A-Za-z][A-Za-z _-]*?)(?:\*\*)?\s*:?\s*(?:\*\*)?\s*$").expect("heading pattern")
});
static SOURCES_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*[*_]*(?:sources?|supporting(?: ids)?|citations?|evidence)[*_]*\s*:").expect("sources pattern"));
static SENTENCE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\ba(\d+)s(\d+)\b").expect("id pattern"));
static INLINE_CITE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\s*[\[(]\s*a\d+s\d+(?:\s*,\s*a\d+s\d+)*\s*[\])]").expect("inline citation pattern"));

/// Sections of a generation answer: component, text, cited ids.
pub fn parse_generation_output(raw: &str) -> BTreeMap<RationaleComponent, (String, Vec<SentenceId>)> {
    let body = match raw.find("```") {
        Some(open) => {
            let after = &raw[open + 3..];
            let after = after.split_once('\n').map_or("", |(_, rest)| rest);
            after.find("```").map_or(after, |close| &after[..close])
        }
        None => raw,
    };
    let mut out: BTreeMap<RationaleComponent, (String, Vec<SentenceId>)> = BTreeMap::new();
    let mut current: Option<RationaleComponent> = None;
    let mut texts: BTreeMap<RationaleComponent, Vec<String>> = BTreeMap::new();
    for line in body.lines() {
        if let Some(c) = SECTION_HEAD.captures(line).and_then(|m| RationaleComponent::parse_loose(&m[1])) {
            current = Some(c);
            out.entry(c).or_default();
            continue;
        }
        let Some(c) = current else { continue };
        for m in SENTENCE_ID.captures_iter(line) {
            let id = SentenceId::new(m[1].parse().unwrap_or(usize::MAX), m[2].parse().unwrap_or(usize::MAX));
            let ids = &mut out.get_mut(&c).expect("section exists").1;
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        if SOURCES_LINE.is_match(line) {
            continue;
        }
        let cleaned = INLINE_CITE.replace_all(line, "");
        if !cleaned.trim().is_empty() {
            texts.entry(c).or_default().push(cleaned.trim().to_string());
        }
    }
    for (c, lines) in texts {
        out.get_mut(&c).expect("section exists").0 = lines.join(" ");
    }
    out.retain(|_, (text, _)| !text.is_empty());
    out
}

/// Summary built from the labeled sentences themselves, used when the model
/// leaves out a component present in the input.
fn extractive_fallback(table: &SentenceTable, focus: &[LabeledSentence], c: RationaleComponent) -> ComponentSummary {
    let picked: Vec<(SentenceId, String)> = table
        .iter()
        .filter(|(_, s)| focus.iter().any(|l| &l.sentence == *s && l.labels.contains(&c)))
        .take(MAX_SUMMARY_SENTENCES)
        .map(|(id, s)| (id, s.text.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect();
    ComponentSummary { text: picked.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join(" "), supporting: picked.iter().map(|p| p.0).collect() }
}

fn repair_text(original: &str, previous: &str, problems: &[String]) -> String {
    format!(
        "{original}\n## Repair\nYour previous answer was:\n\n{}\n\nIt had these problems:\n{}\nAnswer again in the required format.\n",
        previous.trim(),
        problems.iter().map(|p| format!("- {p}")).collect::<Vec<_>>().join("\n")
    )
}

/// Generate a report for one model run (`run_index` 0 for the primary run).
///
/// Components the input does not carry are dropped, cited ids are kept only
/// when they point at a sentence labeled with that component, and any
/// component left without citations or missing from the answer triggers one
/// repair prompt. After the repair, uncited summaries keep an empty source
/// list and omitted components fall back to their labeled sentences; both
/// add a warning.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    commit: &Commit,
    labeled: &[LabeledSentence],
    strategy: PromptStrategy,
    exemplars: &[ExemplarCommit],
    assets: &PromptAssets,
    gateway: &Gateway,
    model: &ModelSpec,
    run_index: u32,
) -> Result<RationaleReport, GenerateError> {
    let prompt = build_generation_prompt(commit, labeled, strategy, exemplars, assets)?;
    let focus = rationale_sentences(labeled);
    let components = input_components(&focus);
    let table = SentenceTable::from_sentences(labeled.iter().map(|l| &l.sentence));
    let valid_for = |c: RationaleComponent, id: &SentenceId| {
        table.get(*id).is_some_and(|s| focus.iter().any(|l| &l.sentence == s && l.labels.contains(&c)))
    };
    let mut warnings = Vec::new();
    let mut request = CompletionRequest { model: model.clone(), system_text: prompt.system_text.clone(), user_text: prompt.user_text.clone(), run_index };

    let clean = |raw: &str, warnings: &mut Vec<String>| -> BTreeMap<RationaleComponent, ComponentSummary> {
        parse_generation_output(raw)
            .into_iter()
            .filter_map(|(c, (text, ids))| {
                if !components.contains(&c) {
                    warnings.push(format!("dropped {c} summary: no input sentence carries that label"));
                    return None;
                }
                let (good, bad): (Vec<_>, Vec<_>) = ids.into_iter().partition(|id| valid_for(c, id));
                for id in bad {
                    warnings.push(format!("dropped citation {id} from {c}: not an input sentence labeled {c}"));
                }
                Some((c, ComponentSummary { text: limit_sentences(&text), supporting: good }))
            })
            .collect()
    };

    let first = gateway.complete(&request)?;
    let mut summaries = clean(&first.raw_text, &mut warnings);
    let problems: Vec<String> = components
        .iter()
        .filter_map(|c| match summaries.get(c) {
            None => Some(format!("the {c} section is missing")),
            Some(s) if s.supporting.is_empty() => Some(format!("the {c} section cites no valid sentence ids")),
            Some(_) => None,
        })
        .collect();
    if !problems.is_empty() {
        request.user_text = repair_text(&prompt.user_text, &first.raw_text, &problems);
        let second = gateway.complete(&request)?;
        let repaired = clean(&second.raw_text, &mut warnings);
        if summaries.is_empty() && repaired.is_empty() {
            return Err(GenerateError::UnparseableOutput);
        }
        for (c, s) in repaired {
            let better = summaries.get(&c).is_none_or(|old| old.supporting.is_empty() && !s.supporting.is_empty());
            if better {
                summaries.insert(c, s);
            }
        }
    }
    for c in &components {
        match summaries.get(c) {
            None => {
                warnings.push(format!("model omitted {c}; summary assembled from the labeled sentences"));
                summaries.insert(*c, extractive_fallback(&table, &focus, *c));
            }
            Some(s) if s.supporting.is_empty() => warnings.push(format!("{c} summary has no supporting sentence ids")),
            Some(_) => {}
        }
    }
    Ok(RationaleReport { commit_sha: commit.sha.clone(), strategy, model: model.clone(), summaries, warnings })
}

/// Keep at most [`MAX_SUMMARY_SENTENCES`] sentences.
fn limit_sentences(text: &str) -> String {
    let cfg = crate::segment::SegmenterConfig { treat_newline_as_boundary: false, ..Default::default() };
    let sentences = crate::segment::split_text(text, &cfg);
    if sentences.len() <= MAX_SUMMARY_SENTENCES {
        return text.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    sentences[..MAX_SUMMARY_SENTENCES].join(" ")
}

/// Turns text into a vector.
pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f64>, GenerateError>;
}

/// Cosine similarity; `None` when either vector has zero norm or the
/// dimensions differ.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Per component, cosines of every report pair in index order.
    pub pairwise_cosine: BTreeMap<RationaleComponent, Vec<f64>>,
    /// Statistics over all pairwise values; `None` when there are none.
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

/// Pairwise cosine of each component's summary across runs.
pub fn consistency(reports: &[RationaleReport], embedder: &dyn Embedder) -> Result<ConsistencyReport, GenerateError> {
    let mut pairwise: BTreeMap<RationaleComponent, Vec<f64>> = BTreeMap::new();
    let mut cache: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut embed = |t: &str| -> Result<Vec<f64>, GenerateError> {
        if let Some(v) = cache.get(t) {
            return Ok(v.clone());
        }
        let v = embedder.embed(t)?;
        cache.insert(t.to_string(), v.clone());
        Ok(v)
    };
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            for (c, a) in &reports[i].summaries {
                let Some(b) = reports[j].summaries.get(c) else { continue };
                let (va, vb) = (embed(&a.text)?, embed(&b.text)?);
                if let Some(cos) = cosine(&va, &vb) {
                    pairwise.entry(*c).or_default().push(cos);
                }
            }
        }
    }
    let mut all: Vec<f64> = pairwise.values().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    Ok(ConsistencyReport { median: median(&all), min: all.first().copied(), max: all.last().copied(), pairwise_cosine: pairwise })
}

/// Offline embedder: L2-normalized hashed bag of lowercase words. Lexical
/// only; useful for smoke checks, not as a semantic measure.
pub struct HashingEmbedder {
    pub dims: usize,
}

impl Embedder for HashingEmbedder {
    fn model_id(&self) -> &str {
        "hashing-bow"
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, GenerateError> {
        let mut v = vec![0.0; self.dims.max(1)];
        for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let h = Sha256::digest(word.to_lowercase().as_bytes());
            let idx = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as usize % v.len();
            v[idx] += 1.0;
        }
        Ok(v)
    }
}

/// Embeddings endpoint of an OpenAI-compatible server.
pub struct OpenAiEmbeddings {
    transport: Box<dyn Transport>,
    base_url: String,
    model: String,
}

impl OpenAiEmbeddings {
    pub fn new(transport: Box<dyn Transport>, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { transport, base_url: base_url.into().trim_end_matches('/').to_string(), model: model.into() }
    }
}

impl Embedder for OpenAiEmbeddings {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, GenerateError> {
        let body = serde_json::json!({"model": self.model, "input": text}).to_string();
        let req = HttpRequest::post_json(format!("{}/embeddings", self.base_url), body).header("accept", "application/json");
        let unavailable = |m: String| GenerateError::EmbedderUnavailable(m);
        let resp = self.transport.send(&req).map_err(|e: HttpError| unavailable(e.to_string()))?;
        if resp.status != 200 {
            return Err(unavailable(format!("HTTP {}", resp.status)));
        }
        let v: serde_json::Value = serde_json::from_str(&resp.body).map_err(|e| unavailable(e.to_string()))?;
        v["data"][0]["embedding"]
            .as_array()
            .and_then(|a| a.iter().map(serde_json::Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| unavailable("response has no data[0].embedding".into()))
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecording {
    model_id: String,
    text: String,
    vector: Vec<f64>,
}

/// Record/replay wrapper; vectors live at `<cache_dir>/embed/<sha256>.rec`
/// keyed by model id and text.
pub struct CachedEmbedder {
    inner: Option<Box<dyn Embedder>>,
    model_id: String,
    dir: PathBuf,
    mode: CacheMode,
}

impl CachedEmbedder {
    pub fn new(cache_dir: &Path, mode: CacheMode, model_id: impl Into<String>, inner: Option<Box<dyn Embedder>>) -> Self {
        Self { inner, model_id: model_id.into(), dir: cache_dir.join("embed"), mode }
    }

    pub fn key(model_id: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}:{model_id}\n", model_id.len()));
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }
}

impl Embedder for CachedEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, GenerateError> {
        let path = self.dir.join(format!("{}.rec", Self::key(&self.model_id, text)));
        let live = || {
            self.inner
                .as_ref()
                .ok_or_else(|| GenerateError::EmbedderUnavailable(format!("no embedding backend in {} mode", self.mode)))?
                .embed(text)
        };
        match self.mode {
            CacheMode::Live => live(),
            CacheMode::Replay => {
                let raw = fs::read_to_string(&path).map_err(|e| GenerateError::EmbedderUnavailable(format!("{}: {e}", path.display())))?;
                let rec: EmbeddingRecording =
                    serde_json::from_str(&raw).map_err(|e| GenerateError::EmbedderUnavailable(format!("{}: {e}", path.display())))?;
                Ok(rec.vector)
            }
            CacheMode::Record => {
                let vector = live()?;
                let rec = EmbeddingRecording { model_id: self.model_id.clone(), text: text.to_string(), vector: vector.clone() };
                write_atomic(&path, &serde_json::to_string_pretty(&rec).expect("recording serializes"))
                    .map_err(|e| GenerateError::EmbedderUnavailable(e.to_string()))?;
                Ok(vector)
            }
        }
    }
}
