//! Shared domain vocabulary: commits, artifacts, sentences and rationale labels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid commit sha {0:?}: expected 40 lowercase hex characters")]
    InvalidSha(String),
    #[error("unknown rationale component {0:?}")]
    UnknownComponent(String),
    #[error("unknown artifact kind {0:?}")]
    UnknownArtifactKind(String),
    #[error("malformed sentence id {0:?}")]
    MalformedSentenceId(String),
    #[error("malformed sentence key {0:?}")]
    MalformedSentenceKey(String),
}

/// A fine-grained facet of code-change rationale.
///
/// Only [`Goal`](Self::Goal), [`Need`](Self::Need) and
/// [`Alternatives`](Self::Alternatives) are extraction targets; the remaining
/// members exist so that annotation records can carry them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RationaleComponent {
    Goal,
    Need,
    Alternatives,
    SelectedAlternative,
    Validation,
    SideEffects,
    MaturityStage,
}

impl RationaleComponent {
    pub const ALL: [RationaleComponent; 7] = [
        Self::Goal,
        Self::Need,
        Self::Alternatives,
        Self::SelectedAlternative,
        Self::Validation,
        Self::SideEffects,
        Self::MaturityStage,
    ];

    pub const TARGETS: [RationaleComponent; 3] = [Self::Goal, Self::Need, Self::Alternatives];

    pub fn is_extraction_target(self) -> bool {
        Self::TARGETS.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Goal => "Goal",
            Self::Need => "Need",
            Self::Alternatives => "Alternatives",
            Self::SelectedAlternative => "SelectedAlternative",
            Self::Validation => "Validation",
            Self::SideEffects => "SideEffects",
            Self::MaturityStage => "MaturityStage",
        }
    }

    /// Lenient name lookup used when reading model output: case-insensitive,
    /// ignores spaces/underscores/hyphens and accepts singular `Alternative`.
    pub fn parse_loose(raw: &str) -> Option<Self> {
        let norm: String = raw
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-' | '*' | '`' | '"' | '\''))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "goal" | "goals" => Some(Self::Goal),
            "need" | "needs" => Some(Self::Need),
            "alternatives" | "alternative" => Some(Self::Alternatives),
            "selectedalternative" | "selectedsolution" => Some(Self::SelectedAlternative),
            "validation" => Some(Self::Validation),
            "sideeffects" | "sideeffect" => Some(Self::SideEffects),
            "maturitystage" => Some(Self::MaturityStage),
            _ => None,
        }
    }
}

impl fmt::Display for RationaleComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RationaleComponent {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| ModelError::UnknownComponent(s.to_string()))
    }
}

/// The three components the extractor labels, in canonical order.
pub fn extraction_targets() -> Vec<RationaleComponent> {
    RationaleComponent::TARGETS.to_vec()
}

/// Lowercase 40-character hexadecimal commit id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommitSha(String);

impl CommitSha {
    pub fn new(raw: impl Into<String>) -> Result<Self, ModelError> {
        let raw = raw.into();
        let ok = raw.len() == 40 && raw.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(Self(raw))
        } else {
            Err(ModelError::InvalidSha(raw))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The 7-character abbreviation platforms show in their UI.
    pub fn short(&self) -> &str {
        &self.0[..7]
    }
}

impl fmt::Display for CommitSha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for CommitSha {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for CommitSha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        CommitSha::new(raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedFile {
    pub path: String,
    /// Lowercase language tag derived from the extension (`java`, `md`, ...).
    pub language: String,
    pub added: u32,
    pub removed: u32,
}

impl ChangedFile {
    pub fn new(path: impl Into<String>, added: u32, removed: u32) -> Self {
        let path = path.into();
        let language = language_tag(&path);
        Self { path, language, added, removed }
    }

    pub fn is_java(&self) -> bool {
        self.language == "java"
    }
}

pub fn language_tag(path: &str) -> String {
    let file = path.rsplit('/').next().unwrap_or(path);
    match file.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => ext.to_ascii_lowercase(),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub repo_slug: String,
    pub sha: CommitSha,
    pub message: String,
    pub diff: String,
    pub changed_files: Vec<ChangedFile>,
}

impl Commit {
    pub fn lines_changed(&self) -> u64 {
        self.changed_files.iter().map(|f| u64::from(f.added) + u64::from(f.removed)).sum()
    }

    pub fn touches_java(&self) -> bool {
        self.changed_files.iter().any(ChangedFile::is_java)
    }

    /// Project name: the part of the slug after the owner.
    pub fn project(&self) -> &str {
        self.repo_slug.rsplit('/').next().unwrap_or(&self.repo_slug)
    }
}

/// Kinds of development documents linked to a commit. The declaration order is
/// the canonical sort order used when serializing graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArtifactKind {
    CommitMessage,
    Issue,
    PullRequest,
    CodeReview,
    ClassJavadoc,
    MethodJavadoc,
    InlineComment,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 7] = [
        Self::CommitMessage,
        Self::Issue,
        Self::PullRequest,
        Self::CodeReview,
        Self::ClassJavadoc,
        Self::MethodJavadoc,
        Self::InlineComment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CommitMessage => "CommitMessage",
            Self::Issue => "Issue",
            Self::PullRequest => "PullRequest",
            Self::CodeReview => "CodeReview",
            Self::ClassJavadoc => "ClassJavadoc",
            Self::MethodJavadoc => "MethodJavadoc",
            Self::InlineComment => "InlineComment",
        }
    }

    /// Human label used in prompts and reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::CommitMessage => "Commit message",
            Self::Issue => "Issue",
            Self::PullRequest => "Pull request",
            Self::CodeReview => "Code review",
            Self::ClassJavadoc => "Class Javadoc",
            Self::MethodJavadoc => "Method Javadoc",
            Self::InlineComment => "Inline comments",
        }
    }

    pub fn is_code_comment(self) -> bool {
        matches!(self, Self::ClassJavadoc | Self::MethodJavadoc | Self::InlineComment)
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::UnknownArtifactKind(s.to_string()))
    }
}

pub const COMMIT_MESSAGE_LOCATOR: &str = "commit-message";

/// Identifies an artifact within one commit's graph. Identity is the
/// `(kind, locator)` pair; `url` is informational.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub kind: ArtifactKind,
    pub locator: String,
    #[serde(default)]
    pub url: String,
}

impl ArtifactRef {
    pub fn new(kind: ArtifactKind, locator: impl Into<String>, url: impl Into<String>) -> Self {
        Self { kind, locator: locator.into(), url: url.into() }
    }

    pub fn commit_message() -> Self {
        Self::new(ArtifactKind::CommitMessage, COMMIT_MESSAGE_LOCATOR, "")
    }

    pub fn key(&self) -> (ArtifactKind, &str) {
        (self.kind, self.locator.as_str())
    }

    /// Issue/PR number when the locator is numeric.
    pub fn number(&self) -> Option<u64> {
        match self.kind {
            ArtifactKind::Issue | ArtifactKind::PullRequest | ArtifactKind::CodeReview => {
                self.locator.parse().ok()
            }
            _ => None,
        }
    }

    pub fn display_name(&self) -> String {
        match self.kind {
            ArtifactKind::CommitMessage => "Commit message".to_string(),
            ArtifactKind::Issue => format!("Issue #{}", self.locator),
            ArtifactKind::PullRequest => format!("Pull request #{}", self.locator),
            ArtifactKind::CodeReview => format!("Code review of pull request #{}", self.locator),
            k => format!("{} in {}", k.label(), self.locator),
        }
    }
}

impl PartialOrd for ArtifactRef {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ArtifactRef {
    /// Canonical order: kind, then numeric locator when both are numeric, then
    /// lexicographic locator, then url.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| match (self.locator.parse::<u64>(), other.locator.parse::<u64>()) {
                (Ok(a), Ok(b)) => a.cmp(&b),
                _ => self.locator.cmp(&other.locator),
            })
            .then_with(|| self.url.cmp(&other.url))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Relevance {
    #[default]
    Unknown,
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyBlock {
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    pub text: String,
}

impl BodyBlock {
    pub fn new(author: impl Into<String>, timestamp: Option<DateTime<Utc>>, text: impl Into<String>) -> Self {
        Self { author: author.into(), timestamp, text: text.into() }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self::new("", None, text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    #[serde(rename = "ref")]
    pub reference: ArtifactRef,
    #[serde(default)]
    pub title: String,
    pub body_blocks: Vec<BodyBlock>,
    #[serde(default)]
    pub relevance: Relevance,
}

impl Artifact {
    pub fn new(reference: ArtifactRef, title: impl Into<String>, body_blocks: Vec<BodyBlock>) -> Self {
        Self { reference, title: title.into(), body_blocks, relevance: Relevance::Unknown }
    }

    /// Texts that are segmented into sentences: the title (when present)
    /// followed by every body block.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.title.as_str())
            .filter(|t| !t.trim().is_empty())
            .chain(self.body_blocks.iter().map(|b| b.text.as_str()))
    }

    /// All stored text joined by blank lines.
    pub fn full_text(&self) -> String {
        self.texts().collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub artifact: ArtifactRef,
    pub ordinal: usize,
    pub text: String,
}

impl Sentence {
    pub fn key(&self) -> SentenceKey {
        SentenceKey {
            kind: self.artifact.kind,
            locator: self.artifact.locator.clone(),
            ordinal: self.ordinal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    #[serde(default)]
    pub labels: BTreeSet<RationaleComponent>,
}

impl LabeledSentence {
    pub fn new(sentence: Sentence, labels: impl IntoIterator<Item = RationaleComponent>) -> Self {
        Self { sentence, labels: labels.into_iter().collect() }
    }

    pub fn unlabeled(sentence: Sentence) -> Self {
        Self { sentence, labels: BTreeSet::new() }
    }
}

/// Position-independent identity of a sentence: `Kind:locator#ordinal`.
/// Used to align predictions with ground truth.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceKey {
    pub kind: ArtifactKind,
    pub locator: String,
    pub ordinal: usize,
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}#{}", self.kind, self.locator, self.ordinal)
    }
}

impl FromStr for SentenceKey {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::MalformedSentenceKey(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let (locator, ordinal) = rest.rsplit_once('#').ok_or_else(bad)?;
        Ok(Self {
            kind: kind.parse().map_err(|_| bad())?,
            locator: locator.to_string(),
            ordinal: ordinal.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for SentenceKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Prompt-stable sentence id `a<artifact-index>s<ordinal>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceId {
    pub artifact: usize,
    pub ordinal: usize,
}

impl SentenceId {
    pub fn new(artifact: usize, ordinal: usize) -> Self {
        Self { artifact, ordinal }
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}s{}", self.artifact, self.ordinal)
    }
}

impl FromStr for SentenceId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::MalformedSentenceId(s.to_string());
        let rest = s.strip_prefix('a').ok_or_else(bad)?;
        let (a, o) = rest.split_once('s').ok_or_else(bad)?;
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if !digits(a) || !digits(o) {
            return Err(bad());
        }
        Ok(Self { artifact: a.parse().map_err(|_| bad())?, ordinal: o.parse().map_err(|_| bad())? })
    }
}

impl Serialize for SentenceId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
