use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;

use cntm::corpus::{
    find_linqs_files, from_records, load_generic, load_linqs, merge_authors, read_records,
    CorpusError, Dataset, IngestOptions, Split, VocabularyFilterSpec, FALLBACK_AUTHOR,
    MERGED_AUTHOR,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn lenient() -> IngestOptions {
    IngestOptions {
        filter: VocabularyFilterSpec {
            common_threshold: 1.0,
            rare_count: 1,
            ..VocabularyFilterSpec::default()
        },
        test_fraction: 0.0,
        ..IngestOptions::default()
    }
}

fn index_of(data: &Dataset, id: &str) -> u32 {
    data.corpus
        .documents
        .iter()
        .position(|d| d.id == id)
        .unwrap() as u32
}

fn author_of(data: &Dataset, id: &str) -> String {
    let d = index_of(data, id) as usize;
    data.corpus.authors[data.corpus.effective_author(d) as usize]
        .name
        .clone()
}

#[test]
fn linqs_orientation_and_tokens() {
    let (content, cites) = find_linqs_files(&fixture("linqs")).unwrap();
    let data = load_linqs(&content, &cites, 0.0, 0).unwrap();
    let c = &data.corpus;
    assert_eq!(c.documents.len(), 4);
    assert_eq!(c.vocabulary.len(), 5);
    assert_eq!(c.documents[0].tokens, vec![0, 2]);
    assert_eq!(c.documents[3].tokens, vec![3, 4]);
    assert_eq!(c.class_names, vec!["Neural", "Theory"]);
    assert_eq!(c.documents[1].label, Some(1));
    // "p10 p30" reads as p30 citing p10
    assert!(data.graph.contains(2, 0));
    assert!(!data.graph.contains(0, 2));
    assert!(data.graph.contains(3, 1));
    assert!(data.graph.contains(2, 1));
    assert_eq!(data.graph.citation_count(), 3);
    assert_eq!(data.report.dropped_citations, 1);
    assert!((0..4).all(|i| data.graph.contains(i, i)));
    assert!(c.documents.iter().all(|d| d.first_author.is_none()));
    assert_eq!(c.authors.len(), 1);
    assert_eq!(c.authors[0].name, FALLBACK_AUTHOR);
}

#[test]
fn linqs_rejects_non_binary_attributes() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("bad.content");
    let cites = dir.path().join("bad.cites");
    fs::write(&content, "x\t0\t2\tA\n").unwrap();
    fs::write(&cites, "").unwrap();
    match load_linqs(&content, &cites, 0.0, 0) {
        Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
    fs::write(&content, "x\t0\t1\tA\ny\t1\tB\n").unwrap();
    assert!(matches!(
        load_linqs(&content, &cites, 0.0, 0),
        Err(CorpusError::Parse { line: 2, .. })
    ));
}

#[test]
fn linqs_directory_without_pair_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("only.content"), "").unwrap();
    assert!(matches!(
        find_linqs_files(dir.path()),
        Err(CorpusError::Io { .. })
    ));
}

#[test]
fn generic_records_pipeline() {
    let data = load_generic(&fixture("records.jsonl"), &lenient()).unwrap();
    let c = &data.corpus;
    let ids: Vec<&str> = c.documents.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, vec!["a", "b", "c", "e"]);
    assert_eq!(data.report.dropped_documents, 1);
    assert_eq!(data.report.dropped_citations, 1);
    assert_eq!(data.graph.citation_count(), 4);
    let (a, b, cc, e) = (
        index_of(&data, "a"),
        index_of(&data, "b"),
        index_of(&data, "c"),
        index_of(&data, "e"),
    );
    assert!(data.graph.contains(a, b));
    assert!(data.graph.contains(cc, a));
    assert!(data.graph.contains(cc, b));
    assert!(data.graph.contains(e, cc));

    assert_eq!(author_of(&data, "a"), "J Smith");
    assert_eq!(author_of(&data, "b"), "J Doe");
    assert_eq!(author_of(&data, "c"), "A Turing");
    assert_eq!(author_of(&data, "e"), FALLBACK_AUTHOR);
    assert_eq!(data.report.authors, 3);

    assert_eq!(c.class_names, vec!["ml", "theory"]);
    assert!(c.is_labeled());

    for w in ["we", "the", "and", "of", "with"] {
        assert!(c.vocabulary.id(w).is_none(), "stopword {w} kept");
    }
    let first = &c.documents[a as usize];
    assert_eq!(first.title_len, 3);
    let title: Vec<&str> = first
        .title_tokens()
        .iter()
        .map(|&w| c.vocabulary.word(w))
        .collect();
    assert_eq!(title, vec!["bayesian", "topic", "models"]);
    assert!(c.documents.iter().all(|d| d.split == Split::Train));
}

#[test]
fn duplicate_ids_are_rejected() {
    let mut records = read_records(&fixture("records.jsonl")).unwrap();
    records[1].id = "a".into();
    assert!(matches!(
        from_records(&records, &lenient()),
        Err(CorpusError::DuplicateId(id)) if id == "a"
    ));
}

#[test]
fn filters_that_remove_everything_fail() {
    let records = read_records(&fixture("records.jsonl")).unwrap();
    assert!(matches!(
        from_records(&records, &IngestOptions::default()),
        Err(CorpusError::EmptyVocabulary)
    ));
}

#[test]
fn dataset_round_trip() {
    let mut opts = lenient();
    opts.test_fraction = 0.5;
    opts.seed = 4;
    let data = load_generic(&fixture("records.jsonl"), &opts).unwrap();
    assert_eq!(data.corpus.test_indices().len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.json");
    data.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.corpus.table_hash(), data.corpus.table_hash());
}

#[test]
fn merging_below_one_is_identity() {
    let data = load_generic(&fixture("records.jsonl"), &lenient()).unwrap();
    let mut corpus = data.corpus.clone();
    let ids = merge_authors(&mut corpus, 1, true).unwrap();
    assert_eq!(corpus, data.corpus);
    let expected: Vec<u32> = (0..corpus.documents.len())
        .map(|d| data.corpus.effective_author(d))
        .collect();
    assert_eq!(ids, expected);
}

#[test]
fn merging_by_class_names_dummies() {
    let data = load_generic(&fixture("records.jsonl"), &lenient()).unwrap();
    let mut corpus = data.corpus.clone();
    let ids = merge_authors(&mut corpus, 2, true).unwrap();
    let name = |d: usize| &corpus.authors[ids[d] as usize];
    assert_eq!(name(0).name, "ml");
    assert_eq!(name(1).name, "ml");
    assert_eq!(ids[0], ids[1]);
    assert_eq!(name(2).name, "theory");
    assert!(name(0).dummy && name(2).dummy);
    assert_eq!(name(3).name, FALLBACK_AUTHOR);
    let distinct: HashSet<u32> = ids.iter().copied().collect();
    assert_eq!(distinct.len(), 3);
}

#[test]
fn merging_without_labels_uses_one_group() {
    let data = load_generic(&fixture("records.jsonl"), &lenient()).unwrap();
    let mut corpus = data.corpus.clone();
    let ids = merge_authors(&mut corpus, 2, false).unwrap();
    assert!(ids[..3].iter().all(|&a| a == ids[0]));
    assert_eq!(corpus.authors[ids[0] as usize].name, MERGED_AUTHOR);
}

#[test]
fn merging_by_class_requires_labels() {
    let data = load_generic(&fixture("records.jsonl"), &lenient()).unwrap();
    let mut corpus = data.corpus.clone();
    corpus.documents[1].label = None;
    match merge_authors(&mut corpus, 2, true) {
        Err(CorpusError::MissingLabels(ids)) => assert_eq!(ids, vec!["b".to_string()]),
        other => panic!("expected missing labels, got {other:?}"),
    }
}

#[test]
fn productive_authors_survive_merging() {
    let mut opts = lenient();
    opts.test_fraction = 0.0;
    let mut records = read_records(&fixture("records.jsonl")).unwrap();
    records[1].authors = vec!["John Smith".into()];
    let data = from_records(&records, &opts).unwrap();
    let mut corpus = data.corpus.clone();
    let ids = merge_authors(&mut corpus, 2, true).unwrap();
    assert_eq!(ids[0], ids[1]);
    assert_eq!(corpus.authors[ids[0] as usize].name, "J Smith");
    assert!(!corpus.authors[ids[0] as usize].dummy);
    assert_eq!(corpus.authors[ids[2] as usize].name, "theory");
}
