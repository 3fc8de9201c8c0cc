//! Rebuilds the recorded fixtures from the scripted endpoints:
//! `cargo test -p rationale-forge-cli --test regenerate -- --ignored`.

mod support;

use std::collections::BTreeMap;
use std::fs;

use clap::Parser;
use rationale_forge::dataset::{save_corpus, GroundTruthRecord, Split};
use rationale_forge::extractor::SentenceTable;
use rationale_forge::model::{LabeledSentence, RationaleComponent};
use rationale_forge::retriever::ArtifactGraph;
use rationale_forge::segment::SegmenterConfig;
use rationale_forge_cli::{run, Cli};
use support::{fake_services, fixtures, stem, COMMITS};

fn cli(args: &[&str]) {
    let cli = Cli::try_parse_from(std::iter::once("rationale-forge").chain(args.iter().copied())).unwrap();
    run(cli, fake_services()).unwrap_or_else(|e| panic!("{args:?}: {}", e.message));
}

#[test]
#[ignore]
fn regenerate_fixtures() {
    let root = fixtures();
    let cache = root.join("cache");
    let _ = fs::remove_dir_all(&cache);
    let work = tempfile::tempdir().unwrap();
    let gold: BTreeMap<String, BTreeMap<String, Vec<RationaleComponent>>> =
        serde_json::from_str(&fs::read_to_string(root.join("gold_labels.json")).unwrap()).unwrap();
    let mut records = Vec::new();
    for (repo, sha) in COMMITS {
        let s = stem(repo);
        let graph = work.path().join(format!("{s}.graph.json"));
        let labels = work.path().join(format!("{s}.labels.json"));
        let report = work.path().join(format!("{s}.report.json"));
        let c = cache.to_str().unwrap();
        cli(&["--mode", "record", "--cache-dir", c, "link", repo, sha, "--out", graph.to_str().unwrap()]);
        cli(&["--mode", "record", "--cache-dir", c, "extract", graph.to_str().unwrap(), "--out", labels.to_str().unwrap()]);
        cli(&["--mode", "record", "--cache-dir", c, "generate", labels.to_str().unwrap(), "--out", report.to_str().unwrap()]);

        let g: ArtifactGraph = serde_json::from_str(&fs::read_to_string(&graph).unwrap()).unwrap();
        let table = SentenceTable::from_artifacts(&g.artifacts, &SegmenterConfig::default());
        let wanted = gold.get(sha).cloned().unwrap_or_default();
        let labeled: Vec<LabeledSentence> = table
            .iter()
            .map(|(_, s)| {
                let key = s.key().to_string();
                println!("{sha} {key:<28} {}", s.text);
                LabeledSentence::new(s.clone(), wanted.get(&key).cloned().unwrap_or_default())
            })
            .collect();
        let unknown: Vec<_> = wanted.keys().filter(|k| !labeled.iter().any(|l| &l.sentence.key().to_string() == *k)).collect();
        assert!(unknown.is_empty(), "gold labels for unknown sentences: {unknown:?}");
        records.push(GroundTruthRecord {
            commit: g.commit,
            artifacts: g.artifacts,
            labeled_sentences: labeled,
            reference_summaries: BTreeMap::new(),
            split: Split::Eval,
        });
    }
    let corpus = root.join("corpus");
    let _ = fs::remove_dir_all(&corpus);
    save_corpus(&records, &corpus).unwrap();
    let bench = work.path().join("bench.json");
    cli(&[
        "--mode", "record", "--cache-dir", cache.to_str().unwrap(), "bench", "--corpus", corpus.to_str().unwrap(),
        "--strategies", "ci-zs,ci-fs,ci-rfs", "--out", bench.to_str().unwrap(),
    ]);

    let expected = root.join("expected");
    let _ = fs::remove_dir_all(&expected);
    fs::create_dir_all(&expected).unwrap();
    let replay = tempfile::tempdir().unwrap();
    for (name, bytes) in support::replay_pipeline(replay.path()) {
        fs::write(expected.join(name), bytes).unwrap();
    }
    fs::write(expected.join("bench.json"), support::replay_bench(replay.path())).unwrap();
}
