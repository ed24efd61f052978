use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cntm::corpus::Dataset;
use cntm::synthetic::{generate, to_records, SyntheticSpec};

fn cntm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cntm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cntm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_records(dir: &Path, spec: &SyntheticSpec, labeled: bool) -> PathBuf {
    let data = generate(spec).dataset;
    let path = dir.join("records.jsonl");
    let text: String = to_records(&data)
        .into_iter()
        .map(|mut r| {
            if !labeled {
                r.label = None;
            }
            serde_json::to_string(&r).unwrap() + "\n"
        })
        .collect();
    fs::write(&path, text).unwrap();
    path
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        docs: 80,
        topics: 3,
        words_per_topic: 10,
        seed_words: 3,
        authors: 15,
        ..Default::default()
    }
}

/// Ingest the small synthetic corpus into `out`.
fn ingested(dir: &Path, labeled: bool) -> PathBuf {
    let records = write_records(dir, &small_spec(), labeled);
    let out = dir.join("out");
    ok(&[
        "ingest",
        "--data",
        s(&records),
        "--out",
        s(&out),
        "--rare-count",
        "1",
        "--common-threshold",
        "1.0",
    ]);
    out
}

#[test]
fn ingest_generic_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.jsonl");
    fs::write(
        &path,
        concat!(
            "{\"id\": \"x\", \"title\": \"graph models\", \"abstract\": \"sparse graph models\", \"authors\": [\"Ada Lovelace\"], \"citations\": [\"y\"]}\n",
            "{\"id\": \"y\", \"title\": \"topic models\", \"abstract\": \"topic inference\", \"authors\": [\"Alan Turing\"], \"citations\": []}\n",
            "{\"id\": \"z\", \"title\": \"sparse topic\", \"abstract\": \"graph inference\", \"authors\": [], \"citations\": [\"x\", \"y\"]}\n",
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let report = ok(&[
        "ingest", "--data", s(&path), "--format", "generic", "--out", s(&out),
        "--rare-count", "1", "--common-threshold", "1.0", "--test-fraction", "0",
    ]);
    assert!(report.contains("publications = 3\n"), "{report}");
    assert!(report.contains("citations = 3\n"));
    assert!(report.contains("authors = 2\n"));
    let data = Dataset::load(&out.join("corpus.json")).unwrap();
    assert_eq!(data.corpus.documents.len(), 3);
    assert_eq!(
        fs::read_to_string(out.join("ingest_report.txt")).unwrap(),
        report
    );
}

#[test]
fn ingest_linqs_directory() {
    let dir = tempfile::tempdir().unwrap();
    let linqs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/linqs");
    let out = dir.path().join("out");
    let report = ok(&["ingest", "--data", s(&linqs), "--out", s(&out)]);
    assert!(report.contains("publications = 4\n"), "{report}");
    assert!(report.contains("citations = 3\n"));
    assert!(report.contains("vocabulary = 5\n"));
    assert!(report.contains("dropped_citations = 1\n"));
}

#[test]
fn missing_inputs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let out = cntm(&["ingest", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.jsonl"));

    let out = cntm(&["train", "--out", s(&dir.path().join("empty"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corpus.json"));

    let out = cntm(&["eval", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = cntm(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_settings_fail_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    let run = cntm(&["train", "--out", s(&out), "--topic-cap", "0"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(!out.join("chain-0").exists());

    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "iterations = 5\ncolour = red\n").unwrap();
    let run = cntm(&["train", "--out", s(&out), "--config", s(&conf)]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("colour"));

    let run = cntm(&["train", "--out", s(&out), "--variant", "lda++"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn training_is_deterministic_and_gated_by_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    let stats = |variant: &str| {
        ok(&[
            "train", "--out", s(&out), "--variant", variant, "--iterations", "10",
            "--network-start", "3", "--seed", "7", "--topic-cap", "5",
        ]);
        fs::read_to_string(out.join("chain-0/stats.log")).unwrap()
    };
    let first = stats("full");
    assert_eq!(first.lines().count(), 10);
    assert!(first.contains("acceptance_rate="));
    assert_eq!(stats("full"), first);
    let no_net = stats("no-network");
    assert_eq!(no_net.lines().count(), 10);
    assert!(!no_net.contains("acceptance_rate"));
    let conf = fs::read_to_string(out.join("run.conf")).unwrap();
    assert!(conf.contains("variant = no-network\n") && conf.contains("seed = 7\n"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "# small run\nvariant = atm\niterations = 4\ntopic_cap = 3\nseed = 1\n",
    )
    .unwrap();
    ok(&["train", "--config", s(&conf), "--out", s(&out), "--iterations", "6"]);
    let stats = fs::read_to_string(out.join("chain-0/stats.log")).unwrap();
    assert_eq!(stats.lines().count(), 6);
    let written = fs::read_to_string(out.join("run.conf")).unwrap();
    assert!(written.contains("variant = atm\n"));
    assert!(written.contains("topic_cap = 3\n"));
    assert!(written.contains("iterations = 6\n"));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    let common = ["--topic-cap", "5", "--network-start", "5", "--seed", "3"];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for target in [&a, &b] {
        fs::create_dir_all(target).unwrap();
        fs::copy(out.join("corpus.json"), target.join("corpus.json")).unwrap();
    }
    let mut args = vec!["train", "--out", s(&a), "--iterations", "16"];
    args.extend(common);
    ok(&args);
    let mut args = vec!["train", "--out", s(&b), "--iterations", "8"];
    args.extend(common);
    ok(&args);
    let mut args = vec!["train", "--out", s(&b), "--iterations", "16", "--resume"];
    args.extend(common);
    ok(&args);
    for file in ["chain-0/stats.log", "chain-0/checkpoint.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn merged_authors_are_named_by_label() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    ok(&[
        "train", "--out", s(&out), "--iterations", "2", "--eta", "2", "--use-labels",
    ]);
    let data = Dataset::load(&out.join("model_corpus.json")).unwrap();
    let dummies: Vec<&str> = data
        .corpus
        .authors
        .iter()
        .filter(|a| a.dummy)
        .map(|a| a.name.as_str())
        .collect();
    assert!(!dummies.is_empty());
    for name in &dummies {
        assert!(data.corpus.class_names.iter().any(|c| c == name), "{name}");
    }
    let original = Dataset::load(&out.join("corpus.json")).unwrap();
    assert!(original.corpus.authors.iter().all(|a| !a.dummy));

    let unlabeled = tempfile::tempdir().unwrap();
    let out = ingested(unlabeled.path(), false);
    let run = cntm(&["train", "--out", s(&out), "--iterations", "2", "--eta", "2", "--use-labels"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn eval_summarizes_chains() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    ok(&[
        "train", "--out", s(&out), "--iterations", "30", "--network-start", "10",
        "--topic-cap", "6", "--chains", "3",
    ]);
    let text = ok(&["eval", "--out", s(&out)]);
    assert!(text.starts_with("chains = 3\n"), "{text}");
    for name in ["perplexity_train", "perplexity_test", "purity", "nmi", "K_active"] {
        let line = text
            .lines()
            .find(|l| l.starts_with(&format!("{name} = ")))
            .unwrap_or_else(|| panic!("{name} missing from {text}"));
        assert!(line.contains(" ± "), "{line}");
    }
    for c in 0..3 {
        assert!(out.join(format!("chain-{c}/metrics.txt")).exists());
    }
    let a = fs::read_to_string(out.join("chain-0/stats.log")).unwrap();
    let b = fs::read_to_string(out.join("chain-1/stats.log")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn eval_without_labels_reports_perplexity_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), false);
    ok(&["train", "--out", s(&out), "--iterations", "5", "--topic-cap", "4"]);
    let text = ok(&["eval", "--out", s(&out)]);
    assert!(text.contains("perplexity_test = "));
    assert!(!text.contains("purity") && !text.contains("nmi ="));
    assert!(text.contains("# documents lack class labels"));
}

#[test]
fn report_and_dot_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingested(dir.path(), true);
    ok(&[
        "train", "--out", s(&out), "--iterations", "150", "--network-start", "50",
        "--topic-cap", "8", "--seed", "2",
    ]);
    let report = ok(&["report", "--out", s(&out)]);
    let topic_lines: Vec<&str> = report.lines().filter(|l| l.starts_with("topic ")).collect();
    assert!(!topic_lines.is_empty());
    for k in 0..3 {
        let seeds: Vec<String> = (0..3).map(|r| format!("t{k}w{r}")).collect();
        assert!(
            topic_lines.iter().any(|l| seeds.iter().all(|w| l.contains(w.as_str()))),
            "planted topic {k} not recovered:\n{report}"
        );
    }
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), report);

    let single = ok(&["report", "--out", s(&out), "--top-words", "1"]);
    for line in single.lines().filter(|l| l.starts_with("topic ")) {
        let words = line.split_once("): ").unwrap().1;
        assert!(!words.contains(", "), "{line}");
    }

    ok(&["export-dot", "--out", s(&out), "--threshold", "0.05"]);
    let dot = fs::read_to_string(out.join("author_topics.dot")).unwrap();
    check_dot(&dot);
    // authors sharing a dominant topic both point at it
    let mut by_topic: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    let names: Vec<(String, String)> = dot
        .lines()
        .filter(|l| l.contains("shape=ellipse"))
        .map(|l| {
            let id = l.trim().split_whitespace().next().unwrap().to_string();
            let name = l.split("label=\"").nth(1).unwrap().trim_end_matches("\"];").to_string();
            (name, id)
        })
        .collect();
    for line in report.lines().skip_while(|l| *l != "[authors]").skip(1) {
        if let Some((name, rest)) = line.split_once(": topic ") {
            let k = rest.split(':').next().unwrap().to_string();
            if let Some((_, id)) = names.iter().find(|(n, _)| n == name) {
                by_topic.entry(k).or_default().push(id.clone());
            }
        }
    }
    let shared = by_topic.iter().find(|(_, ids)| ids.len() >= 2).expect("a shared topic");
    for id in shared.1 {
        assert!(dot.contains(&format!("  {id} -> t{} ", shared.0)), "{id} -> t{}", shared.0);
    }

    ok(&["export-dot", "--out", s(&out), "--threshold", "1.01"]);
    let dot = fs::read_to_string(out.join("author_topics.dot")).unwrap();
    check_dot(&dot);
    assert!(!dot.contains("->"));
}

/// Line-level check against the DOT subset the exporter emits.
fn check_dot(dot: &str) {
    let lines: Vec<&str> = dot.lines().collect();
    assert!(lines[0].starts_with("digraph ") && lines[0].ends_with(" {"));
    assert_eq!(*lines.last().unwrap(), "}");
    let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    for line in &lines[1..lines.len() - 1] {
        let line = line.trim();
        assert!(line.ends_with(';'), "{line}");
        let body = &line[..line.len() - 1];
        if body.contains('=') && !body.contains('[') {
            let (k, _) = body.split_once('=').unwrap();
            assert!(ident(k), "{line}");
            continue;
        }
        let (head, attrs) = body.split_once(" [").expect("attribute list");
        assert!(attrs.ends_with(']'), "{line}");
        assert_eq!(attrs.matches('"').count() - attrs.matches("\\\"").count(), if attrs.contains('"') { 2 } else { 0 }, "{line}");
        match head.split_once(" -> ") {
            Some((a, b)) => assert!(ident(a) && ident(b), "{line}"),
            None => assert!(ident(head), "{line}"),
        }
    }
}
