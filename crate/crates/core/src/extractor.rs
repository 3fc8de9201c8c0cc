//! Rationale sentence identification: prompt assembly, repeated model runs
//! and per-component majority voting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{parse_labeled_output, CompletionRequest, Gateway, GatewayError, ModelSpec};
use crate::model::{Artifact, ArtifactKind, ArtifactRef, Commit, CommitSha, LabeledSentence, RationaleComponent, Sentence, SentenceId, SentenceKey};
use crate::segment::{segment, SegmenterConfig};

pub const DEFINITIONS: &str = include_str!("../assets/definitions.txt");
pub const CI_RULES: &str = include_str!("../assets/ci_rules.txt");
const EXEMPLAR_PACK: [&str; 2] = [include_str!("../assets/exemplars/01.json"), include_str!("../assets/exemplars/02.json")];

/// Version tag of the `sentence_id -> [labels]` output contract.
pub const OUTPUT_FORMAT_VERSION: &str = "labels-v1";
pub const DEFAULT_PROMPT_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptStrategy {
    #[serde(rename = "ci-zs")]
    CiZs,
    #[serde(rename = "ci-fs")]
    CiFs,
    #[serde(rename = "ci-rfs")]
    CiRfs,
    #[serde(rename = "cg-zs")]
    CgZs,
    #[serde(rename = "cg-fs")]
    CgFs,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 5] = [Self::CiZs, Self::CiFs, Self::CiRfs, Self::CgZs, Self::CgFs];

    pub fn name(self) -> &'static str {
        match self {
            Self::CiZs => "ci-zs",
            Self::CiFs => "ci-fs",
            Self::CiRfs => "ci-rfs",
            Self::CgZs => "cg-zs",
            Self::CgFs => "cg-fs",
        }
    }

    pub fn is_identification(self) -> bool {
        matches!(self, Self::CiZs | Self::CiFs | Self::CiRfs)
    }

    /// Exemplar commits the strategy expects.
    pub fn exemplar_count(self) -> usize {
        match self {
            Self::CiZs | Self::CgZs => 0,
            _ => 2,
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|p| p.name() == norm).ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("strategy {0} cannot be used for this stage")]
    WrongStrategy(PromptStrategy),
    #[error("strategy {strategy} takes {expected} exemplar commits, got {got}")]
    ExemplarCount { strategy: PromptStrategy, expected: usize, got: usize },
    #[error("exemplar {commit} lacks an explanation for labeled sentence {key}")]
    MissingExplanations { commit: String, key: String },
    #[error("prompt is {chars} characters, over the budget of {budget}")]
    PromptTooLarge { chars: usize, budget: usize },
    #[error("invalid voting policy: threshold {threshold} with {runs} runs")]
    InvalidPolicy { runs: u32, threshold: u32 },
    #[error("run {run}: no sentence id could be recovered from the model output")]
    Unparseable { run: u32 },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("exemplar pack: {0}")]
    Exemplars(String),
}

/// A solved example shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarCommit {
    pub commit: Commit,
    pub sentences: Vec<LabeledSentence>,
    #[serde(default)]
    pub explanations: BTreeMap<SentenceKey, String>,
    #[serde(default)]
    pub reference_summaries: BTreeMap<RationaleComponent, String>,
}

impl ExemplarCommit {
    /// Every labeled sentence must carry a non-empty explanation.
    pub fn check_explanations(&self) -> Result<(), ExtractError> {
        for ls in self.sentences.iter().filter(|s| !s.labels.is_empty()) {
            let key = ls.sentence.key();
            if self.explanations.get(&key).is_none_or(|e| e.trim().is_empty()) {
                return Err(ExtractError::MissingExplanations { commit: self.commit.sha.short().to_string(), key: key.to_string() });
            }
        }
        Ok(())
    }
}

/// The two exemplar commits shipped with the crate.
pub fn bundled_exemplars() -> Vec<ExemplarCommit> {
    EXEMPLAR_PACK.iter().map(|raw| serde_json::from_str(raw).expect("bundled exemplar parses")).collect()
}

/// Every `*.json` file of `dir` in file-name order.
pub fn load_exemplars(dir: &Path) -> Result<Vec<ExemplarCommit>, ExtractError> {
    let err = |e: &dyn fmt::Display| ExtractError::Exemplars(format!("{}: {e}", dir.display()));
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| err(&e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let raw = fs::read_to_string(p).map_err(|e| err(&e))?;
            serde_json::from_str(&raw).map_err(|e| ExtractError::Exemplars(format!("{}: {e}", p.display())))
        })
        .collect()
}

/// Decision rules: non-empty lines of the rules asset that are not comments.
pub fn parse_rules(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingPolicy {
    pub runs: u32,
    pub threshold: u32,
}

impl Default for VotingPolicy {
    fn default() -> Self {
        Self { runs: 3, threshold: 2 }
    }
}

impl VotingPolicy {
    pub fn new(runs: u32, threshold: u32) -> Result<Self, ExtractError> {
        if threshold == 0 || threshold > runs {
            return Err(ExtractError::InvalidPolicy { runs, threshold });
        }
        Ok(Self { runs, threshold })
    }
}

pub type LabelMap = BTreeMap<SentenceId, BTreeSet<RationaleComponent>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSet {
    pub commit: CommitSha,
    pub strategy: PromptStrategy,
    /// Ordered by run index.
    pub per_run: Vec<LabelMap>,
    /// Parser repairs per run.
    #[serde(default)]
    pub notes: Vec<Vec<String>>,
}

/// Sentences grouped by artifact, with prompt ids `a<i>s<j>`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceTable {
    groups: Vec<(ArtifactRef, String, Vec<Sentence>)>,
}

fn artifact_order(a: &Artifact) -> (u8, Option<chrono::DateTime<chrono::Utc>>, ArtifactRef) {
    let first = a.body_blocks.iter().filter_map(|b| b.timestamp).min();
    let tier = match a.reference.kind {
        ArtifactKind::CommitMessage => 0,
        k if k.is_code_comment() => 2,
        _ => 1,
    };
    (tier, first, a.reference.clone())
}

impl SentenceTable {
    /// Segment `artifacts` and order them: commit message, then platform
    /// artifacts by first timestamp, then code comments. Artifacts without
    /// sentences are skipped.
    pub fn from_artifacts(artifacts: &[Artifact], cfg: &SegmenterConfig) -> Self {
        let mut sorted: Vec<&Artifact> = artifacts.iter().collect();
        sorted.sort_by_key(|a| artifact_order(a));
        let groups = sorted
            .into_iter()
            .map(|a| (a.reference.clone(), a.title.clone(), segment(a, cfg)))
            .filter(|(_, _, s)| !s.is_empty())
            .collect();
        Self { groups }
    }

    /// Group already-segmented sentences by artifact in order of first
    /// appearance.
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Self {
        let mut groups: Vec<(ArtifactRef, String, Vec<Sentence>)> = Vec::new();
        for s in sentences {
            match groups.iter_mut().find(|g| g.0 == s.artifact) {
                Some(g) => g.2.push(s.clone()),
                None => groups.push((s.artifact.clone(), String::new(), vec![s.clone()])),
            }
        }
        Self { groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.2.len()).sum()
    }

    pub fn groups(&self) -> impl Iterator<Item = (usize, &ArtifactRef, &[Sentence])> {
        self.groups.iter().enumerate().map(|(i, g)| (i, &g.0, g.2.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (SentenceId, &Sentence)> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.2.iter().enumerate().map(move |(j, s)| (SentenceId::new(i, j), s)))
    }

    pub fn ids(&self) -> Vec<SentenceId> {
        self.iter().map(|(id, _)| id).collect()
    }

    pub fn get(&self, id: SentenceId) -> Option<&Sentence> {
        self.groups.get(id.artifact).and_then(|g| g.2.get(id.ordinal))
    }

    pub fn id_of(&self, key: &SentenceKey) -> Option<SentenceId> {
        self.iter().find(|(_, s)| &s.key() == key).map(|(id, _)| id)
    }
}

/// Sentence text on one line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn labels_text(labels: &BTreeSet<RationaleComponent>) -> String {
    labels.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
}

impl Prompt {
    pub fn chars(&self) -> usize {
        self.system_text.chars().count() + self.user_text.chars().count()
    }

    pub(crate) fn check_budget(self, budget: usize) -> Result<Self, ExtractError> {
        let chars = self.chars();
        if chars > budget {
            Err(ExtractError::PromptTooLarge { chars, budget })
        } else {
            Ok(self)
        }
    }

    /// Both texts as one document, as written to golden files.
    pub fn render(&self) -> String {
        format!("=== system ===\n{}\n=== user ===\n{}", self.system_text, self.user_text)
    }
}

/// Fixed prompt material: definitions and decision rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssets {
    pub definitions: String,
    pub rules: Vec<String>,
    pub budget: usize,
}

impl Default for PromptAssets {
    fn default() -> Self {
        Self { definitions: DEFINITIONS.trim_end().to_string(), rules: parse_rules(CI_RULES), budget: DEFAULT_PROMPT_BUDGET }
    }
}

pub(crate) fn push_section(out: &mut String, title: &str, body: &str) {
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str("## ");
    out.push_str(title);
    out.push('\n');
    out.push_str(body.trim_end());
}

pub(crate) fn diff_section(commit: &Commit) -> String {
    let diff = commit.diff.trim_end();
    if diff.is_empty() {
        "(no diff available)".to_string()
    } else {
        format!("```diff\n{diff}\n```")
    }
}

pub(crate) fn exemplar_header(k: usize, ex: &ExemplarCommit) -> String {
    let files: Vec<&str> = ex.commit.changed_files.iter().map(|f| f.path.as_str()).collect();
    format!(
        "### Example {k}: {}@{}\nChanged files: {}\n",
        ex.commit.repo_slug,
        ex.commit.sha.short(),
        if files.is_empty() { "(none)".to_string() } else { files.join(", ") }
    )
}

fn group_heading(i: usize, r: &ArtifactRef, title: &str) -> String {
    let mut h = format!("### a{i}: {}", r.display_name());
    if !title.trim().is_empty() && r.kind != ArtifactKind::CommitMessage {
        h.push_str(&format!(" ({})", one_line(title)));
    }
    h
}

const CI_SYSTEM: &str = "You annotate software development artifacts with code change rationale. Follow the output format exactly.";

const CI_TASK: &str = "Below are the sentences of every artifact linked to one commit: its message, related issues and pull requests, code review comments and the comments in the changed Java code. Decide for each sentence which of the rationale components Goal, Need and Alternatives it expresses. A sentence may express several components or none.";

fn ci_output_format() -> String {
    format!(
        "Output format ({OUTPUT_FORMAT_VERSION}): return exactly one fenced code block. Inside it write one line per sentence id, in the order given above:\n\n\
<sentence id> -> [<labels>]\n\n\
<labels> is a comma-separated subset of Goal, Need, Alternatives. Write [] when no component applies. Put nothing else inside the block."
    )
}

/// Identification prompt for `commit` over `table`.
pub fn build_identification_prompt(
    commit: &Commit,
    table: &SentenceTable,
    strategy: PromptStrategy,
    exemplars: &[ExemplarCommit],
    assets: &PromptAssets,
) -> Result<Prompt, ExtractError> {
    if !strategy.is_identification() {
        return Err(ExtractError::WrongStrategy(strategy));
    }
    if exemplars.len() != strategy.exemplar_count() {
        return Err(ExtractError::ExemplarCount { strategy, expected: strategy.exemplar_count(), got: exemplars.len() });
    }
    if strategy == PromptStrategy::CiRfs {
        exemplars.iter().try_for_each(ExemplarCommit::check_explanations)?;
    }
    let mut user = String::new();
    push_section(&mut user, "Task", CI_TASK);
    push_section(&mut user, "Rationale components", &assets.definitions);
    if !exemplars.is_empty() {
        let mut body = String::new();
        for (k, ex) in exemplars.iter().enumerate() {
            if k > 0 {
                body.push('\n');
            }
            body.push_str(&exemplar_header(k + 1, ex));
            let ex_table = SentenceTable::from_sentences(ex.sentences.iter().map(|s| &s.sentence));
            for (i, r, sentences) in ex_table.groups() {
                body.push_str(&format!("{}\n", group_heading(i, r, "")));
                for (j, s) in sentences.iter().enumerate() {
                    let labels = ex.sentences.iter().find(|l| l.sentence == *s).map(|l| &l.labels).expect("sentence from exemplar");
                    body.push_str(&format!("a{i}s{j}: {}\n", one_line(&s.text)));
                    body.push_str(&format!("=> [{}]\n", labels_text(labels)));
                    if strategy == PromptStrategy::CiRfs && !labels.is_empty() {
                        body.push_str(&format!("Why: {}\n", one_line(&ex.explanations[&s.key()])));
                    }
                }
            }
        }
        push_section(&mut user, "Worked examples", &body);
    }
    if strategy == PromptStrategy::CiRfs {
        let rules: Vec<String> = assets.rules.iter().enumerate().map(|(i, r)| format!("{}. {r}", i + 1)).collect();
        push_section(&mut user, "Decision rules", &rules.join("\n"));
    }
    push_section(&mut user, &format!("Commit diff ({}@{})", commit.repo_slug, commit.sha.short()), &diff_section(commit));
    let mut body = String::new();
    for (i, r, sentences) in table.groups() {
        let title = table.groups[i].1.as_str();
        body.push_str(&format!("{}\n", group_heading(i, r, title)));
        for (j, s) in sentences.iter().enumerate() {
            body.push_str(&format!("a{i}s{j}: {}\n", one_line(&s.text)));
        }
    }
    if body.is_empty() {
        body.push_str("(no sentences)");
    }
    push_section(&mut user, "Sentences", &body);
    push_section(&mut user, "Output", &ci_output_format());
    user.push('\n');
    Prompt { system_text: CI_SYSTEM.to_string(), user_text: user }.check_budget(assets.budget)
}

/// Run the identification prompt `policy.runs` times. Model calls run
/// concurrently; results are ordered by run index and restricted to the
/// extraction targets.
pub fn classify(
    commit: &Commit,
    table: &SentenceTable,
    strategy: PromptStrategy,
    exemplars: &[ExemplarCommit],
    assets: &PromptAssets,
    policy: VotingPolicy,
    gateway: &Gateway,
    model: &ModelSpec,
) -> Result<RunSet, ExtractError> {
    let prompt = build_identification_prompt(commit, table, strategy, exemplars, assets)?;
    let ids = table.ids();
    let mut run_set = RunSet { commit: commit.sha.clone(), strategy, per_run: Vec::new(), notes: Vec::new() };
    if ids.is_empty() {
        run_set.per_run = vec![LabelMap::new(); policy.runs as usize];
        run_set.notes = vec![Vec::new(); policy.runs as usize];
        return Ok(run_set);
    }
    let results: Vec<Result<(LabelMap, Vec<String>), ExtractError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..policy.runs)
            .map(|run| {
                let req = CompletionRequest {
                    model: model.clone(),
                    system_text: prompt.system_text.clone(),
                    user_text: prompt.user_text.clone(),
                    run_index: run,
                };
                let ids = &ids;
                s.spawn(move || {
                    let out = gateway.complete(&req)?;
                    let parsed = parse_labeled_output(&out.raw_text, ids).map_err(|_| ExtractError::Unparseable { run })?;
                    let mut notes = parsed.notes;
                    let labels = parsed
                        .labels
                        .into_iter()
                        .map(|(id, mut set)| {
                            let dropped: Vec<_> = set.iter().filter(|c| !c.is_extraction_target()).map(|c| c.name()).collect();
                            if !dropped.is_empty() {
                                notes.push(format!("dropped non-target labels {} for {id}", dropped.join(", ")));
                            }
                            set.retain(|c| c.is_extraction_target());
                            (id, set)
                        })
                        .collect();
                    Ok((labels, notes))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("classification worker panicked")).collect()
    });
    for r in results {
        let (labels, notes) = r?;
        run_set.per_run.push(labels);
        run_set.notes.push(notes);
    }
    Ok(run_set)
}

/// Per sentence and per component: keep the component when at least
/// `threshold` runs assigned it.
pub fn vote(per_run: &[LabelMap], threshold: u32) -> LabelMap {
    let mut counts: BTreeMap<SentenceId, BTreeMap<RationaleComponent, u32>> = BTreeMap::new();
    for run in per_run {
        for (id, labels) in run {
            let entry = counts.entry(*id).or_default();
            for c in labels {
                *entry.entry(*c).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(id, c)| (id, c.into_iter().filter(|&(_, n)| n >= threshold).map(|(c, _)| c).collect()))
        .collect()
}

/// Voted labels for every sentence of `table`, in table order.
pub fn majority_vote(runs: &RunSet, policy: VotingPolicy, table: &SentenceTable) -> Vec<LabeledSentence> {
    let voted = vote(&runs.per_run, policy.threshold);
    table
        .iter()
        .map(|(id, s)| LabeledSentence::new(s.clone(), voted.get(&id).into_iter().flatten().copied()))
        .collect()
}
