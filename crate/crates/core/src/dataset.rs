//! Ground-truth corpus: schema, population filters, stratified sampling and
//! on-disk layout (`<root>/<owner>__<name>/<sha>/record.json` plus
//! `<root>/index.json`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{iqr_fences, SizeFilterStats};
use crate::model::{Artifact, Commit, LabeledSentence, RationaleComponent};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("record {record}, field `{field}`: {message}")]
    SchemaViolation { record: usize, field: String, message: String },
    #[error("project {project} has {available} candidates, quota is {needed}")]
    InsufficientCandidates { project: String, needed: usize, available: usize },
    #[error("commit {sha} is already stored with split {stored}; splits cannot change")]
    SplitChanged { sha: String, stored: Split },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Eval,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            other => Err(format!("unknown split `{other}` (expected dev or eval)")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Dev => "dev",
            Split::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub commit: Commit,
    pub artifacts: Vec<Artifact>,
    /// Annotations may use all seven components.
    pub labeled_sentences: Vec<LabeledSentence>,
    #[serde(default)]
    pub reference_summaries: BTreeMap<RationaleComponent, String>,
    pub split: Split,
}

impl GroundTruthRecord {
    /// Semantic checks beyond the JSON shape. Returns `(field path, message)`.
    pub fn check(&self) -> Result<(), (String, String)> {
        let labeled: BTreeSet<RationaleComponent> = self.labeled_sentences.iter().flat_map(|l| l.labels.iter().copied()).collect();
        for c in self.reference_summaries.keys() {
            if !labeled.contains(c) {
                return Err((format!("reference_summaries.{c}"), format!("no labeled sentence carries {c}")));
            }
        }
        for (i, l) in self.labeled_sentences.iter().enumerate() {
            if !self.artifacts.iter().any(|a| a.reference.key() == l.sentence.artifact.key()) {
                return Err((
                    format!("labeled_sentences[{i}].sentence.artifact"),
                    format!("{} is not among the record's artifacts", l.sentence.artifact.display_name()),
                ));
            }
            if l.sentence.text.trim().is_empty() {
                return Err((format!("labeled_sentences[{i}].sentence.text"), "sentence text is empty".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RemovalReason {
    NoJavaFile,
    NonAtomic,
    FileCountOutlier,
    LocOutlier,
}

/// A commit plus the externally judged atomicity flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCandidate {
    pub commit: Commit,
    pub atomic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<Commit>,
    pub removed: Vec<(Commit, RemovalReason)>,
    /// Fences used by the two size stages, when the population was non-empty.
    pub file_count_stats: Option<SizeFilterStats>,
    pub loc_stats: Option<SizeFilterStats>,
}

/// Apply, in order: Java-file filter, atomicity filter, changed-file-count
/// IQR filter, changed-line IQR filter. Each IQR stage computes its fences on
/// the commits surviving the previous stages.
pub fn filter_commits(candidates: &[CommitCandidate], k: f64) -> FilterOutcome {
    let mut removed = Vec::new();
    let mut pool: Vec<&CommitCandidate> = Vec::new();
    for c in candidates {
        if !c.commit.touches_java() {
            removed.push((c.commit.clone(), RemovalReason::NoJavaFile));
        } else {
            pool.push(c);
        }
    }
    pool.retain(|c| {
        if !c.atomic {
            removed.push((c.commit.clone(), RemovalReason::NonAtomic));
        }
        c.atomic
    });
    let mut stage = |pool: &mut Vec<&CommitCandidate>, measure: fn(&Commit) -> f64, reason| {
        let values: Vec<f64> = pool.iter().map(|c| measure(&c.commit)).collect();
        let stats = iqr_fences(&values, k).ok()?;
        pool.retain(|c| {
            let out = stats.is_outlier(measure(&c.commit));
            if out {
                removed.push((c.commit.clone(), reason));
            }
            !out
        });
        Some(stats)
    };
    let file_count_stats = stage(&mut pool, |c| c.changed_files.len() as f64, RemovalReason::FileCountOutlier);
    let loc_stats = stage(&mut pool, |c| c.lines_changed() as f64, RemovalReason::LocOutlier);
    FilterOutcome { kept: pool.into_iter().map(|c| c.commit.clone()).collect(), removed, file_count_stats, loc_stats }
}

/// Draw exactly `quota` commits per project (see [`Commit::project`]).
/// Candidates are ordered by sha before shuffling, so the result depends only
/// on the candidate set and the seed. Output is sorted by project, then sha.
pub fn stratified_sample(commits: &[Commit], per_project: &BTreeMap<String, usize>, seed: u64) -> Result<Vec<Commit>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (project, &quota) in per_project {
        let mut pool: Vec<&Commit> = commits.iter().filter(|c| c.project() == project).collect();
        pool.sort_by(|a, b| a.sha.cmp(&b.sha));
        pool.dedup_by(|a, b| a.sha == b.sha);
        if pool.len() < quota {
            return Err(DatasetError::InsufficientCandidates { project: project.clone(), needed: quota, available: pool.len() });
        }
        let (picked, _) = pool.partial_shuffle(&mut rng, quota);
        let mut picked: Vec<Commit> = picked.iter().map(|c| (*c).clone()).collect();
        picked.sort_by(|a, b| a.sha.cmp(&b.sha));
        out.extend(picked);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    repo: String,
    sha: String,
    split: Split,
    path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Index {
    version: u32,
    records: Vec<IndexEntry>,
}

const INDEX_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn record_dir(commit: &Commit) -> String {
    format!("{}/{}", commit.repo_slug.replace('/', "__"), commit.sha)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("corpus serializes");
    s.push('\n');
    s
}

fn read_index(root: &Path) -> Result<Option<Index>, DatasetError> {
    let path = root.join("index.json");
    let raw = match fs::read_to_string(&path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let de = &mut serde_json::Deserializer::from_str(&raw);
    serde_path_to_error::deserialize(de)
        .map(Some)
        .map_err(|e| DatasetError::SchemaViolation { record: usize::MAX, field: format!("index.json:{}", e.path()), message: e.inner().to_string() })
}

/// Write `records` under `root`. Records already stored with another split
/// are refused.
pub fn save_corpus(records: &[GroundTruthRecord], root: &Path) -> Result<(), DatasetError> {
    if let Some(old) = read_index(root)? {
        for r in records {
            if let Some(e) = old.records.iter().find(|e| e.repo == r.commit.repo_slug && e.sha == r.commit.sha.as_str() && e.split != r.split) {
                return Err(DatasetError::SplitChanged { sha: e.sha.clone(), stored: e.split });
            }
        }
    }
    for (i, r) in records.iter().enumerate() {
        r.check().map_err(|(field, message)| DatasetError::SchemaViolation { record: i, field, message })?;
    }
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let rel = format!("{}/record.json", record_dir(&r.commit));
        let path = root.join(&rel);
        fs::create_dir_all(path.parent().expect("record has a parent")).map_err(io_err(&path))?;
        fs::write(&path, pretty(r)).map_err(io_err(&path))?;
        entries.push(IndexEntry { repo: r.commit.repo_slug.clone(), sha: r.commit.sha.to_string(), split: r.split, path: rel });
    }
    let index_path = root.join("index.json");
    fs::create_dir_all(root).map_err(io_err(root))?;
    fs::write(&index_path, pretty(&Index { version: INDEX_VERSION, records: entries })).map_err(io_err(&index_path))
}

/// Read every record listed in `<root>/index.json`, in index order. Errors
/// name the record index and the JSON path of the offending field.
pub fn load_corpus(root: &Path) -> Result<Vec<GroundTruthRecord>, DatasetError> {
    let Some(index) = read_index(root)? else {
        return Err(io_err(&root.join("index.json"))(std::io::Error::new(std::io::ErrorKind::NotFound, "corpus index not found")));
    };
    let mut out = Vec::with_capacity(index.records.len());
    for (i, entry) in index.records.iter().enumerate() {
        let path = root.join(&entry.path);
        let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
        let de = &mut serde_json::Deserializer::from_str(&raw);
        let record: GroundTruthRecord = serde_path_to_error::deserialize(de).map_err(|e| DatasetError::SchemaViolation {
            record: i,
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        record.check().map_err(|(field, message)| DatasetError::SchemaViolation { record: i, field, message })?;
        if record.split != entry.split || record.commit.sha.as_str() != entry.sha {
            return Err(DatasetError::SchemaViolation { record: i, field: "split".into(), message: "record disagrees with index.json".into() });
        }
        out.push(record);
    }
    Ok(out)
}
