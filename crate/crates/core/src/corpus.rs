//! Documents, vocabulary, authors and the citation graph.
//!
//! Two input formats are supported:
//!
//! * generic JSON Lines, one publication per line with fields `id`, `title`,
//!   `abstract`, `authors`, `citations` and an optional `label`;
//! * the LINQS `*.content` / `*.cites` pair, where each content line is
//!   `id <0/1 attribute vector> label` and each cites line is `cited citing`.
//!
//! Every document is treated as citing itself, so the graph always contains
//! the diagonal.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("documents without class labels cannot be merged by label: {0:?}")]
    MissingLabels(Vec<String>),
    #[error("corpus bundle: {0}")]
    Bundle(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    /// Vocabulary indices; title tokens first, then the abstract.
    pub tokens: Vec<u32>,
    /// `tokens[..title_len]` came from the title.
    pub title_len: usize,
    pub first_author: Option<u32>,
    pub label: Option<u32>,
    pub split: Split,
}

impl Document {
    pub fn title_tokens(&self) -> &[u32] {
        &self.tokens[..self.title_len]
    }

    pub fn body_tokens(&self) -> &[u32] {
        &self.tokens[self.title_len..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Author {
    pub name: String,
    /// Placeholder authors: the fallback for unattributed documents and the
    /// groups created by author merging.
    pub dummy: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Map tokens to indices, dropping anything outside the vocabulary.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
    pub authors: Vec<Author>,
    pub class_names: Vec<String>,
}

pub const FALLBACK_AUTHOR: &str = "(unknown)";
pub const MERGED_AUTHOR: &str = "(merged)";

impl Corpus {
    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    fn author_index(&self, name: &str, dummy: bool) -> Option<u32> {
        self.authors
            .iter()
            .position(|a| a.name == name && a.dummy == dummy)
            .map(|i| i as u32)
    }

    /// Author used by the model: the first author, or the shared fallback.
    pub fn effective_author(&self, doc: usize) -> u32 {
        match self.documents[doc].first_author {
            Some(a) => a,
            None => self
                .author_index(FALLBACK_AUTHOR, true)
                .expect("fallback author registered for unattributed documents"),
        }
    }

    /// Register the fallback author if any document lacks one.
    pub fn ensure_fallback_author(&mut self) {
        let needed = self.documents.iter().any(|d| d.first_author.is_none());
        if needed && self.author_index(FALLBACK_AUTHOR, true).is_none() {
            self.authors.push(Author {
                name: FALLBACK_AUTHOR.to_string(),
                dummy: true,
            });
        }
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.documents.len())
            .filter(|&i| self.documents[i].split == Split::Train)
            .collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.documents.len())
            .filter(|&i| self.documents[i].split == Split::Test)
            .collect()
    }

    pub fn is_labeled(&self) -> bool {
        !self.documents.is_empty() && self.documents.iter().all(|d| d.label.is_some())
    }

    /// Digest of the vocabulary and author tables, used to tie checkpoints to
    /// the corpus they were trained on.
    pub fn table_hash(&self) -> String {
        let mut h = Sha256::new();
        for w in self.vocabulary.words() {
            h.update(w.as_bytes());
            h.update([0]);
        }
        h.update([1]);
        for a in &self.authors {
            h.update(a.name.as_bytes());
            h.update([a.dummy as u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Sparse boolean citation matrix with the diagonal always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationGraph {
    num_docs: usize,
    /// Sorted, unique `(citing, cited)` pairs.
    edges: Vec<(u32, u32)>,
    out_degree: Vec<u32>,
    in_degree: Vec<u32>,
}

impl CitationGraph {
    pub fn new(num_docs: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut set: BTreeSet<(u32, u32)> = pairs
            .into_iter()
            .filter(|&(i, j)| (i as usize) < num_docs && (j as usize) < num_docs)
            .collect();
        for i in 0..num_docs as u32 {
            set.insert((i, i));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut out_degree = vec![0; num_docs];
        let mut in_degree = vec![0; num_docs];
        for &(i, j) in &edges {
            out_degree[i as usize] += 1;
            in_degree[j as usize] += 1;
        }
        Self {
            num_docs,
            edges,
            out_degree,
            in_degree,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    /// Citations excluding the self-citation convention.
    pub fn citation_count(&self) -> usize {
        self.edges.iter().filter(|(i, j)| i != j).count()
    }

    /// `g⁺_i`
    pub fn out_degree(&self, i: usize) -> u32 {
        self.out_degree[i]
    }

    /// `g⁻_i`
    pub fn in_degree(&self, i: usize) -> u32 {
        self.in_degree[i]
    }

    /// Subgraph induced by `keep` (old indices, in new order).
    pub fn restrict(&self, keep: &[usize]) -> CitationGraph {
        let mut map = vec![u32::MAX; self.num_docs];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new as u32;
        }
        let pairs = self.edges.iter().filter_map(|&(i, j)| {
            let (a, b) = (map[i as usize], map[j as usize]);
            (a != u32::MAX && b != u32::MAX).then_some((a, b))
        });
        CitationGraph::new(keep.len(), pairs)
    }
}

/// Summary in the shape of a dataset-statistics table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub publications: usize,
    pub citations: usize,
    pub authors: usize,
    pub vocabulary: usize,
    pub words_per_doc: f64,
    /// Average percentage of a document's distinct words that occur more than once.
    pub repeat_percent: f64,
    pub dropped_documents: usize,
    pub dropped_citations: usize,
}

impl IngestReport {
    pub fn compute(corpus: &Corpus, graph: &CitationGraph) -> Self {
        let d = corpus.documents.len().max(1) as f64;
        let total: usize = corpus.documents.iter().map(|doc| doc.tokens.len()).sum();
        let mut repeat = 0.0;
        for doc in &corpus.documents {
            let mut freq: BTreeMap<u32, u32> = BTreeMap::new();
            for &w in &doc.tokens {
                *freq.entry(w).or_default() += 1;
            }
            if !freq.is_empty() {
                let rep = freq.values().filter(|&&c| c > 1).count();
                repeat += 100.0 * rep as f64 / freq.len() as f64;
            }
        }
        Self {
            publications: corpus.documents.len(),
            citations: graph.citation_count(),
            authors: corpus.authors.iter().filter(|a| !a.dummy).count(),
            vocabulary: corpus.vocabulary.len(),
            words_per_doc: total as f64 / d,
            repeat_percent: repeat / d,
            dropped_documents: 0,
            dropped_citations: 0,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "publications = {}\ncitations = {}\nauthors = {}\nvocabulary = {}\nwords_per_doc = {:.1}\nrepeat_percent = {:.1}\ndropped_documents = {}\ndropped_citations = {}\n",
            self.publications,
            self.citations,
            self.authors,
            self.vocabulary,
            self.words_per_doc,
            self.repeat_percent,
            self.dropped_documents,
            self.dropped_citations
        )
    }
}

/// Corpus bundle: everything training and evaluation read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub corpus: Corpus,
    pub graph: CitationGraph,
    pub report: IngestReport,
}

impl Dataset {
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut ds: Dataset = serde_json::from_str(&text)?;
        ds.corpus.ensure_fallback_author();
        Ok(ds)
    }
}

// ---------------------------------------------------------------------------
// Text and author normalization

const HONORIFICS: &[&str] = &["prof", "professor", "dr", "mr", "mrs", "ms", "miss", "sir", "dame"];
const NAME_SUFFIXES: &[&str] = &["jr", "sr", "ii", "iii", "iv", "phd"];

pub const DEFAULT_EXCLUSION_WORDS: &[&str] = &[
    "society",
    "university",
    "universität",
    "universitat",
    "universite",
    "université",
    "institute",
    "institut",
    "department",
    "laboratory",
    "laboratories",
    "college",
    "school",
    "center",
    "centre",
    "association",
    "corporation",
    "inc",
    "ltd",
    "academy",
    "foundation",
    "committee",
    "group",
];

pub fn default_exclusion_words() -> HashSet<String> {
    DEFAULT_EXCLUSION_WORDS.iter().map(|s| s.to_string()).collect()
}

/// Standardize an author name to `"<first initial> <last name>"`.
///
/// Honorifics are stripped and middle names dropped. Returns `None` for empty
/// input or when any word is in `exclusions` (institutions listed as authors).
pub fn normalize_author_name(raw: &str, exclusions: &HashSet<String>) -> Option<String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    // "Lee, Bruce" -> "Bruce Lee"
    let reordered;
    let text = match raw.split_once(',') {
        Some((last, given)) if !given.trim().is_empty() => {
            reordered = format!("{} {}", given.trim(), last.trim());
            reordered.as_str()
        }
        _ => raw,
    };
    let mut words: Vec<&str> = text
        .split(|c: char| c.is_whitespace() || c == '.' || c == ',')
        .filter(|w| !w.is_empty())
        .collect();
    if words
        .iter()
        .any(|w| exclusions.contains(&w.to_lowercase()))
    {
        return None;
    }
    while let Some(first) = words.first() {
        if HONORIFICS.contains(&first.to_lowercase().as_str()) {
            words.remove(0);
        } else {
            break;
        }
    }
    while let Some(last) = words.last() {
        if words.len() > 1 && NAME_SUFFIXES.contains(&last.to_lowercase().as_str()) {
            words.pop();
        } else {
            break;
        }
    }
    match words.as_slice() {
        [] => None,
        [only] => Some(only.to_string()),
        [first, .., last] => {
            let initial: String = first.chars().next()?.to_uppercase().collect();
            Some(format!("{initial} {last}"))
        }
    }
}

/// Multi-word phrases that are kept together as single tokens.
#[derive(Debug, Clone, Default)]
pub struct PhraseSet {
    phrases: Vec<Vec<String>>,
}

impl PhraseSet {
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Self {
        let mut phrases: Vec<Vec<String>> = phrases
            .iter()
            .map(|p| split_words(p.as_ref()))
            .filter(|p| p.len() > 1)
            .collect();
        // longest first so greedy matching prefers the longest phrase
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        phrases.dedup();
        Self { phrases }
    }

    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        Ok(Self::new(&lines))
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Lowercase, split on non-alphanumerics, then join known phrases.
pub fn tokenize(text: &str, phrases: &PhraseSet) -> Vec<String> {
    let words = split_words(text);
    if phrases.is_empty() {
        return words;
    }
    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    'outer: while i < words.len() {
        for p in &phrases.phrases {
            if words[i..].starts_with(p) {
                out.push(p.join(" "));
                i += p.len();
                continue 'outer;
            }
        }
        out.push(words[i].clone());
        i += 1;
    }
    out
}

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few",
    "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "however", "i", "if", "in", "into", "is", "it",
    "its", "itself", "just", "may", "me", "more", "most", "must", "my", "myself", "no", "nor",
    "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves",
    "out", "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the",
    "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those",
    "through", "thus", "to", "too", "under", "until", "up", "upon", "us", "very", "was", "we",
    "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with",
    "within", "without", "would", "you", "your", "yours", "yourself", "yourselves",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Plain text, one token per line.
pub fn read_word_list(path: &Path) -> Result<HashSet<String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone)]
pub struct VocabularyFilterSpec {
    pub stopwords: HashSet<String>,
    /// Tokens in more than this fraction of documents are dropped.
    pub common_threshold: f64,
    /// Tokens with fewer total occurrences are dropped.
    pub rare_count: usize,
}

impl Default for VocabularyFilterSpec {
    fn default() -> Self {
        Self {
            stopwords: default_stopwords(),
            common_threshold: 0.18,
            rare_count: 50,
        }
    }
}

impl VocabularyFilterSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.common_threshold > 0.0 && self.common_threshold <= 1.0) {
            return Err(CorpusError::Config(format!(
                "common_threshold {} outside (0, 1]",
                self.common_threshold
            )));
        }
        Ok(())
    }
}

/// Vocabulary of tokens surviving the stopword, common-word and rare-word
/// filters, in order of first appearance.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    spec: &VocabularyFilterSpec,
) -> Result<Vocabulary, CorpusError> {
    spec.validate()?;
    let mut order: Vec<&str> = Vec::new();
    let mut freq: HashMap<&str, (usize, usize)> = HashMap::new();
    for doc in docs {
        let mut seen: HashSet<&str> = HashSet::new();
        for tok in doc {
            let tok = tok.as_ref();
            let entry = freq.entry(tok).or_insert_with(|| {
                order.push(tok);
                (0, 0)
            });
            entry.0 += 1;
            if seen.insert(tok) {
                entry.1 += 1;
            }
        }
    }
    let d = docs.len().max(1) as f64;
    let words: Vec<String> = order
        .into_iter()
        .filter(|w| {
            let (count, df) = freq[w];
            !spec.stopwords.contains(*w)
                && df as f64 / d <= spec.common_threshold
                && count >= spec.rare_count
        })
        .map(str::to_string)
        .collect();
    if words.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    Ok(Vocabulary::from(words))
}

// ---------------------------------------------------------------------------
// Loaders

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Record {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub citations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub filter: VocabularyFilterSpec,
    pub exclusion_words: HashSet<String>,
    pub phrases: PhraseSet,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            filter: VocabularyFilterSpec::default(),
            exclusion_words: default_exclusion_words(),
            phrases: PhraseSet::default(),
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

pub fn read_records(path: &Path) -> Result<Vec<Record>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Load a generic JSON Lines corpus and run the full ingestion pipeline.
pub fn load_generic(path: &Path, opts: &IngestOptions) -> Result<Dataset, CorpusError> {
    let records = read_records(path)?;
    from_records(&records, opts)
}

pub fn from_records(records: &[Record], opts: &IngestOptions) -> Result<Dataset, CorpusError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    let mut dropped_documents = 0;
    let mut kept: Vec<&Record> = Vec::new();
    for r in records {
        if r.title.trim().is_empty() && r.abstract_text.trim().is_empty() {
            log::warn!("document {:?} has neither title nor abstract; dropped", r.id);
            dropped_documents += 1;
        } else {
            kept.push(r);
        }
    }
    let tokenized: Vec<(Vec<String>, Vec<String>)> = kept
        .iter()
        .map(|r| {
            (
                tokenize(&r.title, &opts.phrases),
                tokenize(&r.abstract_text, &opts.phrases),
            )
        })
        .collect();
    let full: Vec<Vec<&str>> = tokenized
        .iter()
        .map(|(t, a)| t.iter().chain(a).map(String::as_str).collect())
        .collect();
    let vocabulary = build_vocabulary(&full, &opts.filter)?;

    let mut authors: Vec<Author> = Vec::new();
    let mut author_ids: HashMap<String, u32> = HashMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut documents = Vec::new();
    let mut kept_records = Vec::new();
    for (r, (title, abs)) in kept.iter().zip(&tokenized) {
        let title_ids = vocabulary.encode(title);
        let mut tokens = title_ids.clone();
        tokens.extend(vocabulary.encode(abs));
        if tokens.is_empty() {
            log::warn!("document {:?} has no tokens after filtering; dropped", r.id);
            dropped_documents += 1;
            continue;
        }
        let first_author = r
            .authors
            .iter()
            .find_map(|a| normalize_author_name(a, &opts.exclusion_words))
            .map(|name| {
                *author_ids.entry(name.clone()).or_insert_with(|| {
                    authors.push(Author { name, dummy: false });
                    authors.len() as u32 - 1
                })
            });
        let label = r.label.as_ref().map(|l| {
            match class_names.iter().position(|c| c == l) {
                Some(i) => i as u32,
                None => {
                    class_names.push(l.clone());
                    class_names.len() as u32 - 1
                }
            }
        });
        documents.push(Document {
            id: r.id.clone(),
            tokens,
            title_len: title_ids.len(),
            first_author,
            label,
            split: Split::Train,
        });
        kept_records.push(*r);
    }
    let index: HashMap<&str, u32> = documents
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i as u32))
        .collect();
    let mut dropped_citations = 0;
    let mut pairs = Vec::new();
    for (i, r) in kept_records.iter().enumerate() {
        for c in &r.citations {
            match index.get(c.as_str()) {
                Some(&j) => pairs.push((i as u32, j)),
                None => dropped_citations += 1,
            }
        }
    }
    if dropped_citations > 0 {
        log::warn!("{dropped_citations} citations point outside the corpus; dropped");
    }
    let mut corpus = Corpus {
        documents,
        vocabulary,
        authors,
        class_names,
    };
    corpus.ensure_fallback_author();
    let graph = CitationGraph::new(corpus.documents.len(), pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    split(&mut corpus, opts.test_fraction, &mut rng)?;
    let mut report = IngestReport::compute(&corpus, &graph);
    report.dropped_documents = dropped_documents;
    report.dropped_citations = dropped_citations;
    Ok(Dataset {
        corpus,
        graph,
        report,
    })
}

/// Locate `*.content` and `*.cites` inside a LINQS dataset directory.
pub fn find_linqs_files(dir: &Path) -> Result<(PathBuf, PathBuf), CorpusError> {
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut content = None;
    let mut cites = None;
    for e in entries {
        let p = e.map_err(io_err(dir))?.path();
        match p.extension().and_then(|s| s.to_str()) {
            Some("content") => content = Some(p),
            Some("cites") => cites = Some(p),
            _ => {}
        }
    }
    match (content, cites) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(CorpusError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "directory lacks a *.content and *.cites pair",
            ),
        }),
    }
}

/// Load a LINQS content/cites pair. Attributes become single-occurrence
/// tokens named `w0, w1, …`; a cites line `a b` means `b` cites `a`.
pub fn load_linqs(
    content_path: &Path,
    cites_path: &Path,
    test_fraction: f64,
    seed: u64,
) -> Result<Dataset, CorpusError> {
    let text = fs::read_to_string(content_path).map_err(io_err(content_path))?;
    let mut width: Option<usize> = None;
    let mut documents = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let parse_err = |line: usize, message: String| CorpusError::Parse {
        path: content_path.to_path_buf(),
        line,
        message,
    };
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(n + 1, "expected id, attributes and label".into()));
        }
        let attrs = &fields[1..fields.len() - 1];
        match width {
            None => width = Some(attrs.len()),
            Some(w) if w != attrs.len() => {
                return Err(parse_err(
                    n + 1,
                    format!("expected {w} attributes, found {}", attrs.len()),
                ))
            }
            _ => {}
        }
        let mut tokens = Vec::new();
        for (k, a) in attrs.iter().enumerate() {
            match *a {
                "0" | "0.0" => {}
                "1" | "1.0" => tokens.push(k as u32),
                other => {
                    return Err(parse_err(n + 1, format!("attribute {other:?} is not 0/1")))
                }
            }
        }
        let id = fields[0].to_string();
        if index.insert(id.clone(), documents.len() as u32).is_some() {
            return Err(CorpusError::DuplicateId(id));
        }
        let label = fields[fields.len() - 1];
        let label = match class_names.iter().position(|c| c == label) {
            Some(i) => i as u32,
            None => {
                class_names.push(label.to_string());
                class_names.len() as u32 - 1
            }
        };
        documents.push(Document {
            id,
            tokens,
            title_len: 0,
            first_author: None,
            label: Some(label),
            split: Split::Train,
        });
    }
    let vocabulary = Vocabulary::from(
        (0..width.unwrap_or(0))
            .map(|k| format!("w{k}"))
            .collect::<Vec<_>>(),
    );
    let cites = fs::read_to_string(cites_path).map_err(io_err(cites_path))?;
    let mut pairs = Vec::new();
    let mut dropped_citations = 0;
    for (n, line) in cites.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(CorpusError::Parse {
                path: cites_path.to_path_buf(),
                line: n + 1,
                message: "expected `cited citing`".into(),
            });
        }
        match (index.get(fields[1]), index.get(fields[0])) {
            (Some(&citing), Some(&cited)) => pairs.push((citing, cited)),
            _ => dropped_citations += 1,
        }
    }
    if dropped_citations > 0 {
        log::warn!("{dropped_citations} cites lines reference unknown ids; skipped");
    }
    let mut corpus = Corpus {
        documents,
        vocabulary,
        authors: Vec::new(),
        class_names,
    };
    corpus.ensure_fallback_author();
    let graph = CitationGraph::new(corpus.documents.len(), pairs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    split(&mut corpus, test_fraction, &mut rng)?;
    let mut report = IngestReport::compute(&corpus, &graph);
    report.dropped_citations = dropped_citations;
    Ok(Dataset {
        corpus,
        graph,
        report,
    })
}

/// Random train/test split with `floor(test_fraction · D)` test documents.
pub fn split<R: rand::Rng + ?Sized>(
    corpus: &mut Corpus,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(), CorpusError> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(CorpusError::Config(format!(
            "test fraction {test_fraction} outside [0, 1)"
        )));
    }
    let n = corpus.documents.len();
    let n_test = (test_fraction * n as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for d in &mut corpus.documents {
        d.split = Split::Train;
    }
    for &i in &order[..n_test] {
        corpus.documents[i].split = Split::Test;
    }
    Ok(())
}

/// Replace authors with fewer than `eta` training publications by dummy
/// authors: one per class label when `use_labels`, else a single group.
///
/// Returns the new author id of every document. `eta <= 1` is a no-op.
pub fn merge_authors(
    corpus: &mut Corpus,
    eta: usize,
    use_labels: bool,
) -> Result<Vec<u32>, CorpusError> {
    corpus.ensure_fallback_author();
    let current: Vec<u32> = (0..corpus.documents.len())
        .map(|d| corpus.effective_author(d))
        .collect();
    if eta <= 1 {
        return Ok(current);
    }
    let mut pubs = vec![0usize; corpus.authors.len()];
    for (d, &a) in current.iter().enumerate() {
        if corpus.documents[d].split == Split::Train {
            pubs[a as usize] += 1;
        }
    }
    let merged = |a: u32| !corpus.authors[a as usize].dummy && pubs[a as usize] < eta;
    if use_labels {
        let missing: Vec<String> = current
            .iter()
            .enumerate()
            .filter(|&(d, &a)| merged(a) && corpus.documents[d].label.is_none())
            .map(|(d, _)| corpus.documents[d].id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CorpusError::MissingLabels(missing));
        }
    }

    let mut authors: Vec<Author> = Vec::new();
    let mut lookup: HashMap<(String, bool), u32> = HashMap::new();
    let mut intern = |a: Author, authors: &mut Vec<Author>| -> u32 {
        *lookup
            .entry((a.name.clone(), a.dummy))
            .or_insert_with(|| {
                authors.push(a);
                authors.len() as u32 - 1
            })
    };
    let mut assigned = Vec::with_capacity(current.len());
    for (d, &a) in current.iter().enumerate() {
        let target = if merged(a) {
            let name = if use_labels {
                let label = corpus.documents[d].label.expect("checked above");
                corpus.class_names[label as usize].clone()
            } else {
                MERGED_AUTHOR.to_string()
            };
            Author { name, dummy: true }
        } else {
            corpus.authors[a as usize].clone()
        };
        assigned.push(intern(target, &mut authors));
    }
    let fallback = (FALLBACK_AUTHOR.to_string(), true);
    for (d, doc) in corpus.documents.iter_mut().enumerate() {
        let a = assigned[d];
        let is_fallback = (authors[a as usize].name.clone(), authors[a as usize].dummy) == fallback;
        doc.first_author = if is_fallback { None } else { Some(a) };
    }
    corpus.authors = authors;
    corpus.ensure_fallback_author();
    Ok((0..corpus.documents.len())
        .map(|d| corpus.effective_author(d))
        .collect())
}
