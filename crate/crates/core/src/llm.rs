//! Chat-completion gateway with fingerprint-keyed record/replay.
//!
//! A request fingerprint is the hex SHA-256 of this preimage (lengths are
//! byte counts in decimal):
//!
//! ```text
//! rf-llm-v1\n
//! <len>:<model_id>\n
//! <len>:<system_text>\n
//! <len>:<user_text>\n
//! <len>:<run_index>\n
//! ```
//!
//! Recordings live at `<cache_dir>/llm/<fingerprint>.rec`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{with_retries, write_atomic, Attempt, CacheMode, HttpError, HttpRequest, Transport, RETRY_BACKOFF};
use crate::model::{RationaleComponent, SentenceId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: String,
    pub model_id: String,
    #[serde(default)]
    pub supports_temperature: bool,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_output_tokens() -> u32 {
    4096
}

impl ModelSpec {
    pub fn new(provider: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self { provider: provider.into(), model_id: model_id.into(), supports_temperature: false, max_output_tokens: default_max_output_tokens() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: ModelSpec,
    pub system_text: String,
    pub user_text: String,
    pub run_index: u32,
}

fn push_field(buf: &mut Vec<u8>, field: &[u8]) {
    buf.extend_from_slice(field.len().to_string().as_bytes());
    buf.push(b':');
    buf.extend_from_slice(field);
    buf.push(b'\n');
}

impl CompletionRequest {
    /// The exact bytes hashed into the fingerprint.
    pub fn fingerprint_preimage(&self) -> Vec<u8> {
        let mut buf = b"rf-llm-v1\n".to_vec();
        push_field(&mut buf, self.model.model_id.as_bytes());
        push_field(&mut buf, self.system_text.as_bytes());
        push_field(&mut buf, self.user_text.as_bytes());
        push_field(&mut buf, self.run_index.to_string().as_bytes());
        buf
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.fingerprint_preimage()))
    }

    /// Rough size used for budget accounting.
    pub fn prompt_chars(&self) -> u64 {
        (self.system_text.chars().count() + self.user_text.chars().count()) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: String,
    pub request_fingerprint: String,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no recording for request fingerprint {fingerprint}")]
    MissingRecording { fingerprint: String },
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("recording store: {0}")]
    Store(String),
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Worth retrying (network, 5xx, 429).
    Transient(String),
    Permanent(String),
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &CompletionRequest) -> Result<String, BackendError>;
}

/// Backend for any server speaking the OpenAI chat-completions protocol.
pub struct OpenAiCompatible {
    transport: Box<dyn Transport>,
    base_url: String,
}

impl OpenAiCompatible {
    /// `transport` carries the API key; see [`crate::http::ReqwestTransport`].
    pub fn new(transport: Box<dyn Transport>, base_url: impl Into<String>) -> Self {
        Self { transport, base_url: base_url.into().trim_end_matches('/').to_string() }
    }

    pub fn request_body(req: &CompletionRequest) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": req.model.model_id,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "max_completion_tokens": req.model.max_output_tokens,
        });
        if req.model.supports_temperature {
            body["temperature"] = serde_json::json!(0);
        }
        body
    }
}

impl ChatBackend for OpenAiCompatible {
    fn chat(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let http = HttpRequest::post_json(format!("{}/chat/completions", self.base_url), Self::request_body(req).to_string())
            .header("accept", "application/json");
        let resp = self.transport.send(&http).map_err(|e| match e {
            HttpError::Transport { message, .. } => BackendError::Transient(message),
            other => BackendError::Permanent(other.to_string()),
        })?;
        match resp.status {
            200..=299 => {}
            429 | 500..=599 => return Err(BackendError::Transient(format!("HTTP {}: {}", resp.status, resp.body))),
            s => return Err(BackendError::Permanent(format!("HTTP {s}: {}", resp.body))),
        }
        let v: serde_json::Value = serde_json::from_str(&resp.body).map_err(|e| BackendError::Permanent(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Permanent("response has no choices[0].message.content".into()))
    }
}

/// Caps on live calls; `None` means unlimited.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_requests: Option<u64>,
    pub max_prompt_chars: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LlmRecording {
    fingerprint: String,
    model_id: String,
    run_index: u32,
    system_text: String,
    user_text: String,
    response: String,
}

pub struct Gateway {
    backend: Option<Box<dyn ChatBackend>>,
    dir: PathBuf,
    mode: CacheMode,
    budget: Budget,
    requests: AtomicU64,
    chars: AtomicU64,
    sleep: fn(Duration),
}

impl Gateway {
    /// `backend` may be `None` only in replay mode.
    pub fn new(cache_dir: &Path, mode: CacheMode, backend: Option<Box<dyn ChatBackend>>) -> Self {
        Self {
            backend,
            dir: cache_dir.join("llm"),
            mode,
            budget: Budget::default(),
            requests: AtomicU64::new(0),
            chars: AtomicU64::new(0),
            sleep: std::thread::sleep,
        }
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_sleep(mut self, sleep: fn(Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn recording_path(&self, fingerprint: &str) -> PathBuf {
        self.dir.join(format!("{fingerprint}.rec"))
    }

    fn charge(&self, req: &CompletionRequest) -> Result<(), GatewayError> {
        let n = self.requests.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(max) = self.budget.max_requests.filter(|&m| n > m) {
            return Err(GatewayError::BudgetExceeded(format!("request {n} exceeds the cap of {max}")));
        }
        let c = self.chars.fetch_add(req.prompt_chars(), Ordering::SeqCst) + req.prompt_chars();
        if let Some(max) = self.budget.max_prompt_chars.filter(|&m| c > m) {
            return Err(GatewayError::BudgetExceeded(format!("{c} prompt characters exceed the cap of {max}")));
        }
        Ok(())
    }

    fn live(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let backend = self
            .backend
            .as_ref()
            .ok_or_else(|| GatewayError::ProviderError(format!("no model backend configured in {} mode", self.mode)))?;
        self.charge(req)?;
        with_retries(&RETRY_BACKOFF, self.sleep, || match backend.chat(req) {
            Ok(text) => Attempt::Done(text),
            Err(BackendError::Transient(m)) => Attempt::Retry(GatewayError::ProviderError(m)),
            Err(BackendError::Permanent(m)) => Attempt::Fail(GatewayError::ProviderError(m)),
        })
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let fingerprint = req.fingerprint();
        let path = self.recording_path(&fingerprint);
        let raw_text = match self.mode {
            CacheMode::Live => self.live(req)?,
            CacheMode::Replay => {
                let raw = match fs::read_to_string(&path) {
                    Ok(raw) => raw,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(GatewayError::MissingRecording { fingerprint }),
                    Err(e) => return Err(GatewayError::Store(format!("{}: {e}", path.display()))),
                };
                let rec: LlmRecording =
                    serde_json::from_str(&raw).map_err(|e| GatewayError::Store(format!("{}: {e}", path.display())))?;
                rec.response
            }
            CacheMode::Record => {
                let response = self.live(req)?;
                let rec = LlmRecording {
                    fingerprint: fingerprint.clone(),
                    model_id: req.model.model_id.clone(),
                    run_index: req.run_index,
                    system_text: req.system_text.clone(),
                    user_text: req.user_text.clone(),
                    response: response.clone(),
                };
                let text = serde_json::to_string_pretty(&rec).expect("recording serializes");
                write_atomic(&path, &text).map_err(|e| GatewayError::Store(e.to_string()))?;
                response
            }
        };
        Ok(CompletionResult { raw_text, request_fingerprint: fingerprint })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no sentence id could be recovered from the model output")]
pub struct UnparseableOutput;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedLabels {
    pub labels: BTreeMap<SentenceId, BTreeSet<RationaleComponent>>,
    /// Repairs applied: missing ids, unknown labels, stray ids.
    pub notes: Vec<String>,
}

static BRACKETED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"\b(a\d+s\d+)\b["'`*]*\s*(?:->|=>|→|:|=)\s*\[([^\]]*)\]"#).expect("bracketed pattern")
});
static BARE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^[\s>*\-+"'`]*(a\d+s\d+)\b["'`*]*\s*(?:->|=>|→|:|=)\s*(.*)$"#).expect("bare pattern"));

fn fenced_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => blocks.push(lines.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

/// `(id, label list text)` pairs found in `region`.
fn label_lines(region: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for line in region.lines() {
        let before = out.len();
        for c in BRACKETED.captures_iter(line) {
            out.push((c[1].to_string(), c[2].to_string()));
        }
        if out.len() == before {
            if let Some(c) = BARE.captures(line) {
                out.push((c[1].to_string(), c[2].to_string()));
            }
        }
    }
    out
}

/// Recover `sentence_id -> [labels]` lines from model output.
///
/// The last fenced block that yields any id is preferred; without one the
/// whole text is scanned, so surrounding prose is tolerated. Every expected id
/// appears in the result; gaps, unknown labels and unexpected ids are noted.
pub fn parse_labeled_output(raw_text: &str, expected_sentence_ids: &[SentenceId]) -> Result<ParsedLabels, UnparseableOutput> {
    let expected: BTreeSet<SentenceId> = expected_sentence_ids.iter().copied().collect();
    let lines = fenced_blocks(raw_text)
        .iter()
        .rev()
        .map(|b| label_lines(b))
        .find(|l| !l.is_empty())
        .unwrap_or_else(|| label_lines(raw_text));

    let mut parsed = ParsedLabels::default();
    let mut seen = BTreeSet::new();
    for (id_text, list) in lines {
        let Ok(id) = id_text.parse::<SentenceId>() else { continue };
        if !expected.contains(&id) {
            parsed.notes.push(format!("ignored unexpected id {id}"));
            continue;
        }
        seen.insert(id);
        let entry = parsed.labels.entry(id).or_default();
        for token in list.split([',', ';', '|', '/']).flat_map(|t| t.split(" and ")) {
            let t = token.trim().trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*' | '[' | ']' | '{' | '}' | '.' | ' '));
            if t.is_empty() || t.eq_ignore_ascii_case("none") || t == "∅" {
                continue;
            }
            match RationaleComponent::parse_loose(t) {
                Some(c) => {
                    entry.insert(c);
                }
                None => parsed.notes.push(format!("dropped unknown label {t:?} for {id}")),
            }
        }
    }
    if seen.is_empty() && !expected.is_empty() {
        return Err(UnparseableOutput);
    }
    for id in &expected {
        if !seen.contains(id) {
            parsed.labels.insert(*id, BTreeSet::new());
            parsed.notes.push(format!("missing id {id} mapped to no labels"));
        }
    }
    Ok(parsed)
}
