//! Scripted stand-ins for the code-hosting API and the chat-completions API,
//! plus paths of the recorded fixtures.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rationale_forge::http::{HttpError, HttpRequest, HttpResponse, Transport};
use rationale_forge::retriever::GITHUB_API;
use rationale_forge_cli::{Services, DEFAULT_LLM_BASE_URL};
use serde::Deserialize;

/// `(repo, sha)` of the recorded fixture commits.
pub const COMMITS: [(&str, &str); 3] = [
    ("square/okhttp", "4c86085429edbeef0a383941936ee7b64cc3805e"),
    ("example/widgets", "2b1f0c9d3e4a5b6c7d8e9f00112233445566778a"),
    ("example/ledger", "3c5d7e9f11223344556677889900aabbccddeeff"),
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// File stem used for a commit's pipeline outputs.
pub fn stem(repo: &str) -> String {
    repo.replace('/', "__")
}

#[derive(Deserialize)]
struct Route {
    status: u16,
    #[serde(default)]
    body: Option<serde_json::Value>,
    #[serde(default)]
    file: Option<String>,
}

/// Canned responses keyed by URL path and query.
pub struct FakeGitHub {
    routes: BTreeMap<String, HttpResponse>,
}

impl FakeGitHub {
    pub fn load() -> Self {
        let dir = fixtures().join("github");
        let raw: BTreeMap<String, Route> = serde_json::from_str(&fs::read_to_string(dir.join("routes.json")).unwrap()).unwrap();
        let routes = raw
            .into_iter()
            .map(|(path, r)| {
                let body = match (r.body, r.file) {
                    (_, Some(f)) => fs::read_to_string(dir.join(f)).unwrap(),
                    (Some(v), None) => v.to_string(),
                    (None, None) => String::new(),
                };
                (path, HttpResponse { status: r.status, headers: BTreeMap::new(), body })
            })
            .collect();
        Self { routes }
    }
}

impl Transport for FakeGitHub {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError> {
        let path = req.url.strip_prefix(GITHUB_API).unwrap_or(&req.url);
        Ok(self.routes.get(path).cloned().unwrap_or(HttpResponse {
            status: 404,
            headers: BTreeMap::new(),
            body: r#"{"message":"Not Found"}"#.into(),
        }))
    }
}

fn contains_any(text: &str, words: &[&str]) -> bool {
    let lower = text.to_lowercase();
    words.iter().any(|w| lower.contains(w))
}

/// Keyword labeler standing in for the identification model.
pub fn scripted_labels(id: &str, text: &str) -> Vec<&'static str> {
    let mut out = Vec::new();
    if id == "a0s0" || contains_any(text, &["should enable", "this keeps", "let's skip", "banker's rounding", "cache widget"]) {
        out.push("Goal");
    }
    if contains_any(text, &["crash", "slow", "stutter", "drops frames", "biased", "concurrency bug", "expensive", "drifting"]) {
        out.push("Need");
    }
    if contains_any(text, &["could ", "alternative", "instead", "considered"]) {
        out.push("Alternatives");
    }
    out
}

fn section<'a>(user: &'a str, heading: &str) -> &'a str {
    let start = user.find(heading).map_or(user.len(), |i| i + heading.len());
    let rest = &user[start..];
    rest.find("\n## ").map_or(rest, |end| &rest[..end])
}

fn identification_answer(user: &str) -> String {
    let mut lines = Vec::new();
    for line in section(user, "## Sentences\n").lines() {
        let Some((id, text)) = line.split_once(": ") else { continue };
        if !id.starts_with('a') || id.contains(' ') {
            continue;
        }
        lines.push(format!("{id} -> [{}]", scripted_labels(id, text).join(", ")));
    }
    format!("Here is the classification.\n\n```\n{}\n```\n", lines.join("\n"))
}

fn generation_answer(user: &str) -> String {
    let wanted: Vec<&str> = user
        .lines()
        .find_map(|l| l.strip_prefix("Write summaries for exactly these components: "))
        .map(|l| l.split(". ").next().unwrap_or(l).trim_end_matches('.').split(", ").collect())
        .unwrap_or_default();
    let mut sections = Vec::new();
    for component in wanted {
        let picked: Vec<(&str, &str)> = section(user, "## Labeled sentences\n")
            .lines()
            .filter_map(|l| {
                let (head, text) = l.split_once("]: ")?;
                let (id, labels) = head.split_once(" [")?;
                labels.split(", ").any(|x| x == component).then_some((id, text))
            })
            .take(2)
            .collect();
        let text = picked.iter().map(|p| p.1).collect::<Vec<_>>().join(" ");
        let ids = picked.iter().map(|p| p.0).collect::<Vec<_>>().join(", ");
        sections.push(format!("### {component}\n{text}\nSources: {ids}"));
    }
    format!("```\n{}\n```\n", sections.join("\n\n"))
}

/// Chat-completions endpoint answering from the prompt alone.
pub struct ScriptedLlm;

impl Transport for ScriptedLlm {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, HttpError> {
        let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let user = body["messages"][1]["content"].as_str().unwrap();
        let answer = if user.contains("## Sentences\n") { identification_answer(user) } else { generation_answer(user) };
        let resp = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": answer}}]});
        Ok(HttpResponse { status: 200, headers: BTreeMap::new(), body: resp.to_string() })
    }
}

pub fn fake_services() -> Services {
    Services {
        platform: Some(Box::new(FakeGitHub::load())),
        platform_base_url: GITHUB_API.to_string(),
        llm: Some(Box::new(ScriptedLlm)),
        llm_base_url: DEFAULT_LLM_BASE_URL.to_string(),
        sleep: |_| {},
    }
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Run the binary in `dir` with replay mode and the copied cache.
pub fn run_bin(dir: &Path, args: &[&str]) -> std::process::Output {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_rationale-forge"))
        .current_dir(dir)
        .args(["--mode", "replay", "--cache-dir", "cache"])
        .args(args)
        .env_remove("RF_PLATFORM_TOKEN")
        .env_remove("RF_PLATFORM_BASE_URL")
        .env_remove("RF_LLM_API_KEY")
        .env_remove("RF_LLM_BASE_URL")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// `link -> extract -> generate -> evaluate` for every fixture commit inside a
/// fresh copy of the fixtures at `dir`, using relative paths only. Returns
/// every output file by name.
pub fn replay_pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    copy_dir(&fixtures().join("cache"), &dir.join("cache"));
    copy_dir(&fixtures().join("corpus"), &dir.join("corpus"));
    fs::copy(fixtures().join("ratings.json"), dir.join("ratings.json")).unwrap();
    fs::create_dir_all(dir.join("out")).unwrap();
    let mut labels = Vec::new();
    for (repo, sha) in COMMITS {
        let s = stem(repo);
        let (graph, label, report) = (format!("out/{s}.graph.json"), format!("out/{s}.labels.json"), format!("out/{s}.report.json"));
        run_bin(dir, &["link", repo, sha, "--out", &graph]);
        run_bin(dir, &["extract", &graph, "--out", &label]);
        run_bin(dir, &["generate", &label, "--out", &report]);
        labels.push(label);
    }
    let mut args = vec!["evaluate"];
    args.extend(labels.iter().map(String::as_str));
    args.extend(["--corpus", "corpus", "--ratings", "ratings.json", "--out", "out/metrics.json"]);
    run_bin(dir, &args);
    fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Replays `bench` over the fixture corpus inside a directory already
/// prepared by [`replay_pipeline`].
pub fn replay_bench(dir: &Path) -> Vec<u8> {
    run_bin(dir, &["bench", "--corpus", "corpus", "--strategies", "ci-zs,ci-fs,ci-rfs", "--out", "bench.json"]);
    fs::read(dir.join("bench.json")).unwrap()
}
