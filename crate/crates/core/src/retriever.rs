//! Commit-to-artifact link resolution.
//!
//! Issues and pull requests are discovered three ways: references in the
//! commit message, discussions that mention the commit hash, and references
//! found inside already-fetched artifacts (up to [`ResolveOptions::max_depth`]
//! hops from the commit).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comment::{comment_artifacts, CommentError};
use crate::http::{with_retries, Attempt, HttpError, HttpRequest, HttpResponse, Transport, RETRY_BACKOFF};
use crate::markdown::clean_markdown;
use crate::model::{Artifact, ArtifactKind, ArtifactRef, BodyBlock, ChangedFile, Commit, CommitSha};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("platform unavailable: {0}")]
    PlatformUnavailable(String),
    #[error("rate limit exhausted{}", reset.map(|r| format!(" (resets at {r})")).unwrap_or_default())]
    RateLimited { reset: Option<u64> },
    #[error("commit {0} not found")]
    CommitNotFound(String),
    #[error("unexpected platform payload from {url}: {message}")]
    Decode { url: String, message: String },
    #[error(transparent)]
    Cache(HttpError),
    #[error(transparent)]
    Comments(#[from] CommentError),
}

/// A reference token found in some artifact's text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCandidate {
    /// The token exactly as it occurs in the source text.
    pub raw_token: String,
    pub number: u64,
    /// Set when the token itself says issue or pull request.
    pub kind_hint: Option<ArtifactKind>,
    /// Filled in once the platform confirms the target exists.
    pub resolved: Option<ArtifactRef>,
    pub source: ArtifactRef,
    /// Byte offset of `raw_token` in the scanned text.
    pub offset: usize,
}

static REF_PATTERN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?P<url>(?i:https?://(?:www\.)?github\.com/)(?P<uo>[A-Za-z0-9_.-]+)/(?P<ur>[A-Za-z0-9_.-]+)/(?P<uk>issues|pulls?)/(?P<un>[0-9]+))",
        r"|(?P<path>(?P<pk>issues|pull)/(?P<pn>[0-9]+))",
        r"|(?P<gh>(?i:GH)-(?P<gn>[0-9]+))",
        r"|(?P<hash>(?:(?P<ho>[A-Za-z0-9_.-]+)/(?P<hr>[A-Za-z0-9_.-]+))?#(?P<hn>[0-9]+))",
    ))
    .expect("reference pattern compiles")
});

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Every issue/PR reference in `text`, in order of first occurrence, one per
/// number. References to other repositories are ignored. `source` defaults to
/// the commit message.
pub fn extract_artifact_refs(text: &str, repo_slug: &str) -> Vec<LinkCandidate> {
    extract_refs_from(&ArtifactRef::commit_message(), text, repo_slug)
}

pub fn extract_refs_from(source: &ArtifactRef, text: &str, repo_slug: &str) -> Vec<LinkCandidate> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for caps in REF_PATTERN.captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let before = text[..whole.start()].chars().next_back();
        let after = text[whole.end()..].chars().next();
        if after.is_some_and(is_word) {
            continue;
        }
        let other_repo = |o: Option<regex::Match>, r: Option<regex::Match>| match (o, r) {
            (Some(o), Some(r)) => !format!("{}/{}", o.as_str(), r.as_str()).eq_ignore_ascii_case(repo_slug),
            _ => false,
        };
        let (num, hint) = if caps.name("url").is_some() {
            if other_repo(caps.name("uo"), caps.name("ur")) {
                continue;
            }
            (&caps["un"], Some(kind_of(&caps["uk"])))
        } else if caps.name("path").is_some() {
            if before.is_some_and(|c| is_word(c) || matches!(c, '.' | '-' | '/')) {
                continue;
            }
            (&caps["pn"], Some(kind_of(&caps["pk"])))
        } else if caps.name("gh").is_some() {
            if before.is_some_and(|c| is_word(c) || c == '-') {
                continue;
            }
            (&caps["gn"], None)
        } else {
            let prefixed = caps.name("ho").is_some();
            if !prefixed && before.is_some_and(|c| is_word(c) || c == '&' || c == '#') {
                continue;
            }
            if prefixed && (before.is_some_and(|c| is_word(c) || c == '/') || other_repo(caps.name("ho"), caps.name("hr"))) {
                continue;
            }
            (&caps["hn"], None)
        };
        let Ok(number) = num.parse::<u64>() else { continue };
        if number == 0 || num.len() > 9 || !seen.insert(number) {
            continue;
        }
        out.push(LinkCandidate { raw_token: whole.as_str().to_string(), number, kind_hint: hint, resolved: None, source: source.clone(), offset: whole.start() });
    }
    out
}

fn kind_of(segment: &str) -> ArtifactKind {
    if segment.starts_with("pull") {
        ArtifactKind::PullRequest
    } else {
        ArtifactKind::Issue
    }
}

/// First mention of `sha` in `text`: the full hash or a prefix of at least 7
/// hex digits delimited by non-alphanumerics.
pub fn find_sha_mention<'t>(text: &'t str, sha: &CommitSha) -> Option<&'t str> {
    static HEX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9a-fA-F]{7,40}").expect("hex pattern"));
    HEX.find_iter(text).find_map(|m| {
        let before = text[..m.start()].chars().next_back();
        let after = text[m.end()..].chars().next();
        let bounded = !before.is_some_and(|c| c.is_alphanumeric()) && !after.is_some_and(|c| c.is_alphanumeric());
        (bounded && sha.as_str().starts_with(&m.as_str().to_ascii_lowercase())).then(|| m.as_str())
    })
}

/// The trimmed line of `text` containing byte offset `at`, or `token` when the
/// line is too long to be a readable snippet.
fn evidence_line<'t>(text: &'t str, at: usize, token: &'t str) -> &'t str {
    let start = text[..at].rfind('\n').map_or(0, |p| p + 1);
    let end = text[at..].find('\n').map_or(text.len(), |p| at + p);
    let line = text[start..end].trim();
    if line.chars().count() <= 160 {
        line
    } else {
        token
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkEdge {
    pub from: ArtifactRef,
    pub to: ArtifactRef,
    /// Verbatim excerpt of `from`'s stored text that established the link.
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactGraph {
    pub commit: Commit,
    pub artifacts: Vec<Artifact>,
    pub edges: Vec<LinkEdge>,
}

impl ArtifactGraph {
    /// A graph holding only the commit message.
    pub fn for_commit(commit: Commit) -> Self {
        let message = Artifact::new(ArtifactRef::commit_message(), "", vec![BodyBlock::text(commit.message.trim_end())]);
        Self { commit, artifacts: vec![message], edges: Vec::new() }
    }

    /// Sort nodes by (kind, locator) and edges lexicographically, dropping
    /// duplicate edges.
    pub fn canonicalize(&mut self) {
        self.artifacts.sort_by(|a, b| a.reference.cmp(&b.reference));
        self.edges.sort();
        self.edges.dedup();
    }

    pub fn artifact(&self, kind: ArtifactKind, locator: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.reference.key() == (kind, locator))
    }

    pub fn refs(&self) -> impl Iterator<Item = &ArtifactRef> {
        self.artifacts.iter().map(|a| &a.reference)
    }

    /// Check the structural invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let messages = self.artifacts.iter().filter(|a| a.reference.kind == ArtifactKind::CommitMessage).count();
        if messages != 1 {
            return Err(format!("expected exactly one commit message artifact, found {messages}"));
        }
        let mut keys = BTreeSet::new();
        for a in &self.artifacts {
            if !keys.insert(a.reference.key()) {
                return Err(format!("duplicate artifact {}", a.reference.display_name()));
            }
        }
        for e in &self.edges {
            for end in [&e.from, &e.to] {
                if !keys.contains(&end.key()) {
                    return Err(format!("edge endpoint {} is not in the graph", end.display_name()));
                }
            }
            let from = self.artifact(e.from.kind, &e.from.locator).expect("checked above");
            if e.evidence.is_empty() || !from.full_text().contains(&e.evidence) {
                return Err(format!("evidence {:?} does not occur in {}", e.evidence, e.from.display_name()));
            }
        }
        Ok(())
    }

    /// Add Javadoc and inline-comment artifacts for the changed Java files.
    pub fn attach_code_comments(&mut self, sources: &BTreeMap<String, String>) -> Result<(), CommentError> {
        let found = comment_artifacts(&self.commit, sources)?;
        self.artifacts.retain(|a| !a.reference.kind.is_code_comment());
        self.artifacts.extend(found);
        self.canonicalize();
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph serializes");
        s.push('\n');
        s
    }
}

/// An issue or pull request as returned by the platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadItem {
    pub number: u64,
    pub is_pull: bool,
    pub title: String,
    pub html_url: String,
    pub author: String,
    pub created_at: Option<DateTime<Utc>>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadComment {
    pub id: u64,
    pub author: String,
    pub created_at: Option<DateTime<Utc>>,
    pub body: String,
}

/// Read access to a code-hosting platform.
pub trait PlatformClient: Send + Sync {
    /// Issue or pull request `number`; `None` when it does not exist.
    fn item(&self, repo: &str, number: u64) -> Result<Option<ThreadItem>, RetrievalError>;
    /// Conversation comments of an issue or pull request, oldest first.
    fn item_comments(&self, repo: &str, number: u64) -> Result<Vec<ThreadComment>, RetrievalError>;
    /// Review-thread comments of a pull request.
    fn review_comments(&self, repo: &str, number: u64) -> Result<Vec<ThreadComment>, RetrievalError>;
    /// Numbers of issues and pull requests whose discussion mentions `sha`.
    fn search_mentions(&self, repo: &str, sha: &CommitSha) -> Result<Vec<u64>, RetrievalError>;
    fn commit(&self, repo: &str, sha: &CommitSha) -> Result<Commit, RetrievalError>;
    /// File contents at `sha`; `None` when the path does not exist there.
    fn file_at(&self, repo: &str, sha: &CommitSha, path: &str) -> Result<Option<String>, RetrievalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolveOptions {
    /// Hops from the commit; issues named in the message are one hop away.
    pub max_depth: usize,
    pub parallelism: usize,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        Self { max_depth: 2, parallelism: 4 }
    }
}

struct Fetched {
    item: ThreadItem,
    artifact: Artifact,
    review: Option<Artifact>,
}

fn thread_artifact(item: &ThreadItem, comments: &[ThreadComment]) -> Artifact {
    let kind = if item.is_pull { ArtifactKind::PullRequest } else { ArtifactKind::Issue };
    let mut blocks = Vec::new();
    let body = clean_markdown(&item.body);
    if !body.is_empty() {
        blocks.push(BodyBlock::new(item.author.clone(), item.created_at, body));
    }
    let mut sorted: Vec<&ThreadComment> = comments.iter().collect();
    sorted.sort_by_key(|c| (c.created_at, c.id));
    for c in sorted {
        let text = clean_markdown(&c.body);
        if !text.is_empty() {
            blocks.push(BodyBlock::new(c.author.clone(), c.created_at, text));
        }
    }
    Artifact::new(ArtifactRef::new(kind, item.number.to_string(), item.html_url.clone()), item.title.trim(), blocks)
}

/// One CodeReview artifact holding every review-thread comment of the pull
/// request in chronological order, or `None` without review comments.
pub fn fetch_code_review(pr_ref: &ArtifactRef, repo: &str, platform: &dyn PlatformClient) -> Result<Option<Artifact>, RetrievalError> {
    debug_assert_eq!(pr_ref.kind, ArtifactKind::PullRequest);
    let Some(number) = pr_ref.number() else { return Ok(None) };
    let mut comments = platform.review_comments(repo, number)?;
    comments.sort_by_key(|c| (c.created_at, c.id));
    let blocks: Vec<BodyBlock> = comments
        .iter()
        .filter_map(|c| {
            let text = clean_markdown(&c.body);
            (!text.is_empty()).then(|| BodyBlock::new(c.author.clone(), c.created_at, text))
        })
        .collect();
    if blocks.is_empty() {
        return Ok(None);
    }
    let url = if pr_ref.url.is_empty() { String::new() } else { format!("{}/files", pr_ref.url) };
    Ok(Some(Artifact::new(ArtifactRef::new(ArtifactKind::CodeReview, number.to_string(), url), "", blocks)))
}

fn fetch_one(repo: &str, number: u64, platform: &dyn PlatformClient) -> Result<Option<Fetched>, RetrievalError> {
    let Some(item) = platform.item(repo, number)? else { return Ok(None) };
    let comments = platform.item_comments(repo, number)?;
    let artifact = thread_artifact(&item, &comments);
    let review = if item.is_pull { fetch_code_review(&artifact.reference, repo, platform)? } else { None };
    Ok(Some(Fetched { item, artifact, review }))
}

/// Fetch `numbers` with at most `parallelism` concurrent workers. The first
/// error by number order wins, so failures are deterministic too.
fn fetch_many(repo: &str, numbers: &[u64], platform: &dyn PlatformClient, parallelism: usize) -> Result<BTreeMap<u64, Fetched>, RetrievalError> {
    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<u64, Result<Option<Fetched>, RetrievalError>>> = Mutex::new(BTreeMap::new());
    std::thread::scope(|s| {
        for _ in 0..parallelism.max(1).min(numbers.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&n) = numbers.get(i) else { break };
                let r = fetch_one(repo, n, platform);
                results.lock().expect("results lock").insert(n, r);
            });
        }
    });
    let mut out = BTreeMap::new();
    for (n, r) in results.into_inner().expect("results lock") {
        if let Some(f) = r? {
            out.insert(n, f);
        }
    }
    Ok(out)
}

struct PendingLink {
    from: ArtifactRef,
    number: u64,
    evidence: String,
}

fn links_of(artifact: &Artifact, repo: &str) -> Vec<PendingLink> {
    let text = artifact.full_text();
    extract_refs_from(&artifact.reference, &text, repo)
        .into_iter()
        .map(|c| PendingLink {
            from: artifact.reference.clone(),
            number: c.number,
            evidence: evidence_line(&text, c.offset, &c.raw_token).to_string(),
        })
        .collect()
}

/// Build the artifact graph of `commit`.
///
/// Step one follows references in the commit message, step two asks the
/// platform for discussions mentioning the hash (kept only when the mention is
/// verbatim in the fetched text), step three follows references inside every
/// fetched artifact until `max_depth` hops. References between nodes already
/// in the graph always become edges.
pub fn resolve_commit_artifacts(commit: &Commit, platform: &dyn PlatformClient, opts: ResolveOptions) -> Result<ArtifactGraph, RetrievalError> {
    let repo = commit.repo_slug.as_str();
    let mut graph = ArtifactGraph::for_commit(commit.clone());
    let message = graph.artifacts[0].clone();
    let mut nodes: BTreeMap<u64, ArtifactRef> = BTreeMap::new();
    let mut pending: Vec<PendingLink> = links_of(&message, repo);
    let mut frontier: BTreeSet<u64> = pending.iter().map(|p| p.number).collect();
    let mentions: BTreeSet<u64> = if opts.max_depth > 0 {
        platform.search_mentions(repo, &commit.sha)?.into_iter().collect()
    } else {
        BTreeSet::new()
    };
    frontier.extend(mentions.iter().copied());

    let mut depth = 1;
    while depth <= opts.max_depth && !frontier.is_empty() {
        let numbers: Vec<u64> = frontier.iter().copied().filter(|n| !nodes.contains_key(n)).collect();
        let fetched = fetch_many(repo, &numbers, platform, opts.parallelism)?;
        let mut next_links = Vec::new();
        for (n, f) in fetched {
            let text = f.artifact.full_text();
            let named = pending.iter().any(|p| p.number == n);
            let mention = mentions.contains(&n).then(|| find_sha_mention(&text, &commit.sha)).flatten();
            if !named && mention.is_none() {
                continue;
            }
            if let Some(token) = mention {
                let at = text.find(token).expect("mention comes from text");
                graph.edges.push(LinkEdge {
                    from: f.artifact.reference.clone(),
                    to: message.reference.clone(),
                    evidence: evidence_line(&text, at, token).to_string(),
                });
            }
            debug_assert_eq!(f.item.number, n);
            nodes.insert(n, f.artifact.reference.clone());
            next_links.extend(links_of(&f.artifact, repo));
            if let Some(review) = f.review {
                next_links.extend(links_of(&review, repo));
                graph.artifacts.push(review);
            }
            graph.artifacts.push(f.artifact);
        }
        // Links into fetched nodes become edges; unresolved numbers are dropped.
        for p in pending.drain(..) {
            if let Some(to) = nodes.get(&p.number) {
                graph.edges.push(LinkEdge { from: p.from, to: to.clone(), evidence: p.evidence });
            }
        }
        frontier = next_links.iter().map(|p| p.number).filter(|n| !nodes.contains_key(n)).collect();
        pending = next_links;
        depth += 1;
    }
    // Remaining links from the last level only connect existing nodes.
    for p in pending {
        if let Some(to) = nodes.get(&p.number) {
            graph.edges.push(LinkEdge { from: p.from, to: to.clone(), evidence: p.evidence });
        }
    }
    graph.edges.retain(|e| e.from != e.to);
    graph.canonicalize();
    Ok(graph)
}

/// Post-change sources of every changed Java file; files absent at `sha`
/// (deleted by the commit) map to empty text.
pub fn fetch_sources(commit: &Commit, platform: &dyn PlatformClient) -> Result<BTreeMap<String, String>, RetrievalError> {
    let mut out = BTreeMap::new();
    for f in commit.changed_files.iter().filter(|f| f.is_java()) {
        let text = platform.file_at(&commit.repo_slug, &commit.sha, &f.path)?.unwrap_or_default();
        out.insert(f.path.clone(), text);
    }
    Ok(out)
}

/// REST client for GitHub and API-compatible servers.
pub struct GitHubClient {
    transport: Box<dyn Transport>,
    api_base: String,
    sleep: fn(Duration),
}

pub const GITHUB_API: &str = "https://api.github.com";

#[derive(Deserialize)]
struct ApiUser {
    login: String,
}

#[derive(Deserialize)]
struct ApiIssue {
    number: u64,
    #[serde(default)]
    title: String,
    #[serde(default)]
    body: Option<String>,
    #[serde(default)]
    html_url: String,
    #[serde(default)]
    user: Option<ApiUser>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pull_request: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ApiComment {
    id: u64,
    #[serde(default)]
    user: Option<ApiUser>,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    body: Option<String>,
}

#[derive(Deserialize)]
struct ApiSearch {
    items: Vec<ApiSearchItem>,
}

#[derive(Deserialize)]
struct ApiSearchItem {
    number: u64,
}

#[derive(Deserialize)]
struct ApiCommit {
    commit: ApiCommitInner,
    #[serde(default)]
    files: Vec<ApiFile>,
}

#[derive(Deserialize)]
struct ApiCommitInner {
    message: String,
}

#[derive(Deserialize)]
struct ApiFile {
    filename: String,
    #[serde(default)]
    additions: u32,
    #[serde(default)]
    deletions: u32,
    #[serde(default)]
    status: String,
    #[serde(default)]
    patch: Option<String>,
}

fn login(u: &Option<ApiUser>) -> String {
    u.as_ref().map(|u| u.login.clone()).unwrap_or_else(|| "ghost".into())
}

impl From<ApiComment> for ThreadComment {
    fn from(c: ApiComment) -> Self {
        ThreadComment { id: c.id, author: login(&c.user), created_at: c.created_at, body: c.body.unwrap_or_default() }
    }
}

/// URL of the `rel="next"` entry of a `Link` header.
fn next_link(resp: &HttpResponse) -> Option<String> {
    resp.header("link")?.split(',').find_map(|part| {
        let (url, rel) = part.split_once(';')?;
        rel.contains("rel=\"next\"").then(|| url.trim().trim_start_matches('<').trim_end_matches('>').to_string())
    })
}

impl GitHubClient {
    pub fn new(transport: Box<dyn Transport>, api_base: impl Into<String>) -> Self {
        Self { transport, api_base: api_base.into().trim_end_matches('/').to_string(), sleep: std::thread::sleep }
    }

    /// Replace the sleep used between retries (tests pass a no-op).
    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    fn request(&self, url: &str, accept: &str) -> Result<Option<HttpResponse>, RetrievalError> {
        let req = HttpRequest::get(url).header("accept", accept).header("x-github-api-version", "2022-11-28");
        with_retries(&RETRY_BACKOFF, self.sleep, || match self.transport.send(&req) {
            Err(HttpError::Transport { message, .. }) => Attempt::Retry(RetrievalError::PlatformUnavailable(message)),
            Err(e) => Attempt::Fail(RetrievalError::Cache(e)),
            Ok(resp) => match resp.status {
                200..=299 => Attempt::Done(Some(resp)),
                404 | 410 | 422 => Attempt::Done(None),
                403 | 429 if resp.status == 429 || resp.header("x-ratelimit-remaining") == Some("0") => {
                    Attempt::Fail(RetrievalError::RateLimited { reset: resp.header("x-ratelimit-reset").and_then(|r| r.parse().ok()) })
                }
                500..=599 => Attempt::Retry(RetrievalError::PlatformUnavailable(format!("{url}: HTTP {}", resp.status))),
                s => Attempt::Fail(RetrievalError::PlatformUnavailable(format!("{url}: HTTP {s}"))),
            },
        })
    }

    fn json<T: for<'de> Deserialize<'de>>(&self, url: &str) -> Result<Option<(T, HttpResponse)>, RetrievalError> {
        let Some(resp) = self.request(url, "application/vnd.github+json")? else { return Ok(None) };
        let value = serde_json::from_str(&resp.body).map_err(|e| RetrievalError::Decode { url: url.to_string(), message: e.to_string() })?;
        Ok(Some((value, resp)))
    }

    /// Every page of a list endpoint, following `Link` headers.
    fn pages<T: for<'de> Deserialize<'de>>(&self, first: String) -> Result<Vec<T>, RetrievalError> {
        let mut out = Vec::new();
        let mut url = Some(first);
        while let Some(u) = url.take() {
            let Some((page, resp)) = self.json::<Vec<T>>(&u)? else { break };
            out.extend(page);
            url = next_link(&resp);
        }
        Ok(out)
    }
}

impl PlatformClient for GitHubClient {
    fn item(&self, repo: &str, number: u64) -> Result<Option<ThreadItem>, RetrievalError> {
        let url = format!("{}/repos/{repo}/issues/{number}", self.api_base);
        Ok(self.json::<ApiIssue>(&url)?.map(|(i, _)| ThreadItem {
            number: i.number,
            is_pull: i.pull_request.is_some(),
            title: i.title,
            html_url: i.html_url,
            author: login(&i.user),
            created_at: i.created_at,
            body: i.body.unwrap_or_default(),
        }))
    }

    fn item_comments(&self, repo: &str, number: u64) -> Result<Vec<ThreadComment>, RetrievalError> {
        let url = format!("{}/repos/{repo}/issues/{number}/comments?per_page=100", self.api_base);
        Ok(self.pages::<ApiComment>(url)?.into_iter().map(Into::into).collect())
    }

    fn review_comments(&self, repo: &str, number: u64) -> Result<Vec<ThreadComment>, RetrievalError> {
        let url = format!("{}/repos/{repo}/pulls/{number}/comments?per_page=100", self.api_base);
        Ok(self.pages::<ApiComment>(url)?.into_iter().map(Into::into).collect())
    }

    fn search_mentions(&self, repo: &str, sha: &CommitSha) -> Result<Vec<u64>, RetrievalError> {
        let url = format!("{}/search/issues?q={}+repo:{repo}&per_page=100", self.api_base, sha.as_str());
        let found = self.json::<ApiSearch>(&url)?;
        let mut numbers: Vec<u64> = found.map(|(s, _)| s.items.into_iter().map(|i| i.number).collect()).unwrap_or_default();
        numbers.sort_unstable();
        numbers.dedup();
        Ok(numbers)
    }

    fn commit(&self, repo: &str, sha: &CommitSha) -> Result<Commit, RetrievalError> {
        let mut url = Some(format!("{}/repos/{repo}/commits/{}", self.api_base, sha.as_str()));
        let mut message = None;
        let mut files = Vec::new();
        while let Some(u) = url.take() {
            let Some((c, resp)) = self.json::<ApiCommit>(&u)? else {
                return Err(RetrievalError::CommitNotFound(format!("{repo}@{sha}")));
            };
            message.get_or_insert(c.commit.message);
            files.extend(c.files);
            url = next_link(&resp);
        }
        let mut diff = String::new();
        for f in &files {
            let (old, new) = match f.status.as_str() {
                "added" => ("/dev/null".to_string(), format!("b/{}", f.filename)),
                "removed" => (format!("a/{}", f.filename), "/dev/null".to_string()),
                _ => (format!("a/{}", f.filename), format!("b/{}", f.filename)),
            };
            diff.push_str(&format!("diff --git a/{0} b/{0}\n--- {old}\n+++ {new}\n", f.filename));
            if let Some(p) = &f.patch {
                diff.push_str(p);
                if !p.ends_with('\n') {
                    diff.push('\n');
                }
            }
        }
        Ok(Commit {
            repo_slug: repo.to_string(),
            sha: sha.clone(),
            message: message.unwrap_or_default(),
            diff,
            changed_files: files.iter().map(|f| ChangedFile::new(f.filename.clone(), f.additions, f.deletions)).collect(),
        })
    }

    fn file_at(&self, repo: &str, sha: &CommitSha, path: &str) -> Result<Option<String>, RetrievalError> {
        let url = format!("{}/repos/{repo}/contents/{path}?ref={}", self.api_base, sha.as_str());
        Ok(self.request(&url, "application/vnd.github.raw")?.map(|r| r.body))
    }
}
