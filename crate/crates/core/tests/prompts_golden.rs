//! Rendered prompts are compared against checked-in files. Set `RF_BLESS=1`
//! to rewrite them after an intentional prompt change.

use std::fs;
use std::path::PathBuf;

use rationale_forge::extractor::{bundled_exemplars, build_identification_prompt, PromptAssets, PromptStrategy, SentenceTable};
use rationale_forge::generator::{build_generation_prompt, cosine};
use rationale_forge::llm::{CompletionRequest, ModelSpec};
use rationale_forge::model::{
    Artifact, ArtifactKind, ArtifactRef, BodyBlock, ChangedFile, Commit, CommitSha, LabeledSentence, RationaleComponent,
};
use rationale_forge::segment::SegmenterConfig;

fn commit() -> Commit {
    Commit {
        repo_slug: "square/okhttp".into(),
        sha: CommitSha::new("4c86085429edbeef0a383941936ee7b64cc3805e").unwrap(),
        message: "Don't use SNI on Android 2.3.\n\nFixes #666.".into(),
        diff: "--- a/okhttp/src/main/java/com/squareup/okhttp/internal/Platform.java\n\
+++ b/okhttp/src/main/java/com/squareup/okhttp/internal/Platform.java\n\
@@ -40,3 +40,4 @@\n   public void enableTlsExtensions(SSLSocket socket, String uriHost) {\n+    if (!supportsSni) return;\n   }\n"
            .into(),
        changed_files: vec![ChangedFile::new("okhttp/src/main/java/com/squareup/okhttp/internal/Platform.java", 1, 0)],
    }
}

fn artifacts() -> Vec<Artifact> {
    vec![
        Artifact::new(ArtifactRef::commit_message(), "", vec![BodyBlock::text("Don't use SNI on Android 2.3.\n\nFixes #666.")]),
        Artifact::new(
            ArtifactRef::new(ArtifactKind::Issue, "666", "https://github.com/square/okhttp/issues/666"),
            "SNI crashes on Gingerbread",
            vec![BodyBlock::text(
                "Connections fail intermittently with a native crash. Disabling SNI avoids it. We could also pin a different socket factory.",
            )],
        ),
    ]
}

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts").join(name);
    if std::env::var_os("RF_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs; rerun with RF_BLESS=1 if intended");
}

#[test]
fn ci_zs_minimal() {
    let table = SentenceTable::from_artifacts(&artifacts()[..1], &SegmenterConfig::default());
    let p = build_identification_prompt(&commit(), &table, PromptStrategy::CiZs, &[], &PromptAssets::default()).unwrap();
    golden("ci_zs_minimal.txt", &p.render());
}

#[test]
fn ci_rfs_two_exemplars() {
    let table = SentenceTable::from_artifacts(&artifacts(), &SegmenterConfig::default());
    let p = build_identification_prompt(&commit(), &table, PromptStrategy::CiRfs, &bundled_exemplars(), &PromptAssets::default())
        .unwrap();
    let text = p.render();
    assert!(text.contains("## Worked examples") && text.contains("## Decision rules") && text.contains("Why: "));
    golden("ci_rfs_two_exemplars.txt", &text);
}

#[test]
fn cg_fs() {
    let table = SentenceTable::from_artifacts(&artifacts(), &SegmenterConfig::default());
    let labeled: Vec<LabeledSentence> = table
        .iter()
        .map(|(id, s)| {
            let labels = match id.to_string().as_str() {
                "a0s0" => vec![RationaleComponent::Goal],
                "a1s1" => vec![RationaleComponent::Need],
                "a1s3" => vec![RationaleComponent::Alternatives],
                _ => vec![],
            };
            LabeledSentence::new(s.clone(), labels)
        })
        .collect();
    let exemplars = bundled_exemplars();
    let p = build_generation_prompt(&commit(), &labeled, PromptStrategy::CgFs, &exemplars, &PromptAssets::default()).unwrap();
    golden("cg_fs.txt", &p.render());
}

fn request(model: &str, system: &str, user: &str, run_index: u32) -> CompletionRequest {
    CompletionRequest { model: ModelSpec::new("openai", model), system_text: system.into(), user_text: user.into(), run_index }
}

/// Digests produced by `sha256sum` over the printed preimages.
#[test]
fn fingerprints_match_external_digest() {
    let cases = [
        (request("o4-mini", "sys", "user", 0), "3b4ea058ad42efb1edb635af6c46f162f2164cbe0b2edcce253b944331f187ce"),
        (request("o4-mini", "sys", "user", 1), "2a950bdeac761745b16ed59ad3a4f083e6cdf6b7cea5964d9d28ec8d4c6affcb"),
        (request("gpt-4o", "Annotate rationale. ✓", "a0s0: Hello", 2), "96249a14dca9c80956a321db5e4a08b1de81d80459ad80b97a44623634221bfe"),
    ];
    for (req, hex) in cases {
        assert_eq!(req.fingerprint(), hex);
    }
}

/// Reference values from numpy.
#[test]
fn cosine_matches_numpy() {
    let cases: [(&[f64], &[f64], f64); 5] = [
        (&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 0.9746318461970762),
        (&[1.0, 0.0, -1.0], &[-1.0, 0.0, 1.0], -1.0),
        (&[0.5, 0.25, 0.125, 2.0], &[3.0, -1.0, 0.5, 0.75], 0.41113038349537023),
        (&[1e-3, 2e-3], &[3e3, 6e3], 1.0),
        (&[2.0, -7.0, 1.0, 8.0], &[-3.0, 4.0, 9.0, 0.5], -0.1875485978894247),
    ];
    for (a, b, want) in cases {
        let got = cosine(a, b).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), None);
    assert_eq!(cosine(&[1.0], &[1.0, 2.0]), None);
}
