//! Blocking HTTP transport with a request-keyed record/replay cache.
//!
//! Recordings live at `<cache_dir>/http/<sha256>.rec`, one JSON document per
//! request. The key covers method, URL, `accept` and body; credentials are
//! never part of the key or the recording.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Call through and persist every response.
    Record,
    /// Serve only from recordings; a miss is an error.
    #[default]
    Replay,
    /// Call through without touching the cache.
    Live,
}

impl FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            "live" | "off" => Ok(Self::Live),
            other => Err(format!("unknown cache mode `{other}` (expected record, replay or live)")),
        }
    }
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Record => "record",
            Self::Replay => "replay",
            Self::Live => "live",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    pub url: String,
    /// Lowercase header names; only these are sent besides credentials.
    pub headers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub body: String,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self { method: "GET".into(), url: url.into(), headers: BTreeMap::new(), body: String::new() }
    }

    pub fn post_json(url: impl Into<String>, body: impl Into<String>) -> Self {
        let mut headers = BTreeMap::new();
        headers.insert("content-type".into(), "application/json".into());
        Self { method: "POST".into(), url: url.into(), headers, body: body.into() }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.into());
        self
    }

    /// Cache key: hex sha256 over the request line, `accept` header and body.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.method.as_bytes());
        h.update(b" ");
        h.update(self.url.as_bytes());
        h.update(b"\naccept: ");
        h.update(self.headers.get("accept").map_or("", String::as_str).as_bytes());
        h.update(b"\n\n");
        h.update(self.body.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    /// Lowercase names; only `link`, `retry-after` and the rate-limit headers are kept.
    pub headers: BTreeMap<String, String>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(String::as_str)
    }
}

const KEPT_HEADERS: [&str; 5] = ["link", "retry-after", "x-ratelimit-remaining", "x-ratelimit-reset", "content-type"];

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport failure for {url}: {message}")]
    Transport { url: String, message: String },
    #[error("no recording for {method} {url} (key {key})")]
    MissingRecording { method: String, url: String, key: String },
    #[error("cache i/o at {path}: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
    #[error("corrupt recording {path}: {message}")]
    CorruptRecording { path: PathBuf, message: String },
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError>;
}

/// Live transport backed by `reqwest`. A bearer token, when set, is attached
/// to every request but never recorded.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    bearer: Option<String>,
}

impl ReqwestTransport {
    pub fn new(bearer: Option<String>, timeout: Duration) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("rationale-forge/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| HttpError::Transport { url: String::new(), message: e.to_string() })?;
        Ok(Self { client, bearer: bearer.filter(|t| !t.is_empty()) })
    }
}

impl Transport for ReqwestTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError> {
        let err = |e: reqwest::Error| HttpError::Transport { url: req.url.clone(), message: e.to_string() };
        let method = reqwest::Method::from_bytes(req.method.as_bytes())
            .map_err(|e| HttpError::Transport { url: req.url.clone(), message: e.to_string() })?;
        let mut builder = self.client.request(method, &req.url);
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        if let Some(token) = &self.bearer {
            builder = builder.bearer_auth(token);
        }
        if !req.body.is_empty() {
            builder = builder.body(req.body.clone());
        }
        let resp = builder.send().map_err(err)?;
        let status = resp.status().as_u16();
        let headers = KEPT_HEADERS
            .iter()
            .filter_map(|&h| resp.headers().get(h).and_then(|v| v.to_str().ok()).map(|v| (h.to_string(), v.to_string())))
            .collect();
        let body = resp.text().map_err(err)?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// Refills `rate` tokens per second up to `capacity`; `acquire` blocks.
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, capacity: u32) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self { rate: rate_per_sec.max(f64::MIN_POSITIVE), capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().expect("token bucket poisoned");
                let now = Instant::now();
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.rate).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.rate)
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Recording {
    request: HttpRequest,
    response: HttpResponse,
}

/// Wraps a live transport with the on-disk cache.
pub struct RecordReplay {
    inner: Option<Box<dyn Transport>>,
    dir: PathBuf,
    mode: CacheMode,
    limiter: Option<TokenBucket>,
    write_lock: Mutex<()>,
}

impl RecordReplay {
    /// `inner` may be `None` only in replay mode.
    pub fn new(cache_dir: &Path, mode: CacheMode, inner: Option<Box<dyn Transport>>) -> Self {
        Self { inner, dir: cache_dir.join("http"), mode, limiter: None, write_lock: Mutex::new(()) }
    }

    /// Throttle calls that reach the live transport.
    pub fn with_rate_limit(mut self, bucket: TokenBucket) -> Self {
        self.limiter = Some(bucket);
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.rec"))
    }

    fn live(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError> {
        let inner = self.inner.as_ref().ok_or_else(|| HttpError::Transport {
            url: req.url.clone(),
            message: format!("no live transport configured in {} mode", self.mode),
        })?;
        if let Some(bucket) = &self.limiter {
            bucket.acquire();
        }
        inner.send(req)
    }
}

impl Transport for RecordReplay {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError> {
        let key = req.cache_key();
        let path = self.path_for(&key);
        match self.mode {
            CacheMode::Live => self.live(req),
            CacheMode::Replay => {
                let raw = match fs::read_to_string(&path) {
                    Ok(raw) => raw,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        return Err(HttpError::MissingRecording { method: req.method.clone(), url: req.url.clone(), key })
                    }
                    Err(source) => return Err(HttpError::Cache { path, source }),
                };
                let rec: Recording = serde_json::from_str(&raw)
                    .map_err(|e| HttpError::CorruptRecording { path: path.clone(), message: e.to_string() })?;
                Ok(rec.response)
            }
            CacheMode::Record => {
                let response = self.live(req)?;
                // Server errors are retried by callers and never persisted.
                if response.status < 500 {
                    let rec = Recording { request: req.clone(), response: response.clone() };
                    let text = serde_json::to_string_pretty(&rec).expect("recording serializes");
                    let _guard = self.write_lock.lock().expect("cache lock poisoned");
                    write_atomic(&path, &text)?;
                }
                Ok(response)
            }
        }
    }
}

/// Write via a temporary sibling and rename so readers never see partial files.
pub(crate) fn write_atomic(path: &Path, text: &str) -> Result<(), HttpError> {
    let io = |source| HttpError::Cache { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Delays between attempts: three retries after the first try.
pub const RETRY_BACKOFF: [Duration; 3] = [Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)];

/// How a caller classifies one attempt.
pub enum Attempt<T, E> {
    Done(T),
    /// Transient; try again after the next backoff step.
    Retry(E),
    /// Permanent; stop immediately.
    Fail(E),
}

/// Run `op` once plus up to `backoff.len()` retries, sleeping through `sleep`
/// between attempts. Returns the last transient error when retries run out.
pub fn with_retries<T, E>(backoff: &[Duration], mut sleep: impl FnMut(Duration), mut op: impl FnMut() -> Attempt<T, E>) -> Result<T, E> {
    let mut attempt = 0;
    loop {
        match op() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(e) => match backoff.get(attempt) {
                Some(&d) => {
                    sleep(d);
                    attempt += 1;
                }
                None => return Err(e),
            },
        }
    }
}
