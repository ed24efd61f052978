//! Planted-topic corpora with known structure, for testing and calibration.
//!
//! Each topic owns a disjoint block of words, the first few of which (the
//! seed words) carry extra weight. A document has one class label, which is
//! its main topic; authors have a home topic and long-tailed productivity;
//! citations mostly stay within a class.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    split, Author, CitationGraph, Corpus, Dataset, Document, IngestReport, Record, Split,
    Vocabulary,
};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub seed_words: usize,
    /// Relative weight of a seed word against an ordinary block word.
    pub seed_weight: f64,
    pub doc_len: usize,
    pub title_len: usize,
    /// Probability that a body token comes from a different topic.
    pub mixing: f64,
    pub authors: usize,
    /// Zipf exponent of author productivity.
    pub author_exponent: f64,
    /// Probability that a document's class is its author's home topic.
    pub author_fidelity: f64,
    pub citations_per_doc: usize,
    /// Probability that a citation stays within the citing document's class.
    pub within_class: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            docs: 200,
            topics: 5,
            words_per_topic: 30,
            seed_words: 5,
            seed_weight: 4.0,
            doc_len: 40,
            title_len: 6,
            mixing: 0.1,
            authors: 60,
            author_exponent: 1.1,
            author_fidelity: 0.8,
            citations_per_doc: 4,
            within_class: 0.9,
            test_fraction: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    /// Seed word indices per planted topic.
    pub seed_words: Vec<Vec<u32>>,
}

pub fn word_name(topic: usize, rank: usize) -> String {
    format!("t{topic}w{rank}")
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    assert!(spec.topics >= 1 && spec.words_per_topic >= spec.seed_words && spec.docs >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = spec.topics * spec.words_per_topic;
    let words: Vec<String> = (0..spec.topics)
        .flat_map(|k| (0..spec.words_per_topic).map(move |r| word_name(k, r)))
        .collect();
    let block_weights: Vec<f64> = (0..spec.words_per_topic)
        .map(|r| if r < spec.seed_words { spec.seed_weight } else { 1.0 })
        .collect();
    let in_block = WeightedIndex::new(&block_weights).expect("positive weights");
    let author_weights: Vec<f64> = (0..spec.authors.max(1))
        .map(|a| 1.0 / ((a + 1) as f64).powf(spec.author_exponent))
        .collect();
    let pick_author = WeightedIndex::new(&author_weights).expect("positive weights");

    let draw_word = |topic: usize, rng: &mut ChaCha8Rng| -> u32 {
        (topic * spec.words_per_topic + in_block.sample(rng)) as u32
    };

    let mut documents = Vec::with_capacity(spec.docs);
    for d in 0..spec.docs {
        let (author, home) = if spec.authors > 0 {
            let a = pick_author.sample(&mut rng);
            (Some(a as u32), a % spec.topics)
        } else {
            (None, rng.gen_range(0..spec.topics))
        };
        let label = if rng.gen::<f64>() < spec.author_fidelity {
            home
        } else {
            rng.gen_range(0..spec.topics)
        };
        let mut tokens = Vec::with_capacity(spec.title_len + spec.doc_len);
        for _ in 0..spec.title_len {
            tokens.push(draw_word(label, &mut rng));
        }
        for _ in 0..spec.doc_len {
            let topic = if spec.topics > 1 && rng.gen::<f64>() < spec.mixing {
                let other = rng.gen_range(0..spec.topics - 1);
                if other >= label { other + 1 } else { other }
            } else {
                label
            };
            tokens.push(draw_word(topic, &mut rng));
        }
        documents.push(Document {
            id: format!("doc{d}"),
            tokens,
            title_len: spec.title_len,
            first_author: author,
            label: Some(label as u32),
            split: Split::Train,
        });
    }

    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); spec.topics];
    for (d, doc) in documents.iter().enumerate() {
        by_class[doc.label.unwrap() as usize].push(d as u32);
    }
    let mut pairs = Vec::new();
    if spec.docs > 1 {
        for (i, doc) in documents.iter().enumerate() {
            let own = &by_class[doc.label.unwrap() as usize];
            for _ in 0..spec.citations_per_doc {
                let j = if own.len() > 1 && rng.gen::<f64>() < spec.within_class {
                    *own.choose(&mut rng).unwrap()
                } else {
                    rng.gen_range(0..spec.docs as u32)
                };
                if j as usize != i {
                    pairs.push((i as u32, j));
                }
            }
        }
    }

    let authors = (0..spec.authors)
        .map(|a| Author {
            name: format!("A Author{a}"),
            dummy: false,
        })
        .collect();
    let mut corpus = Corpus {
        documents,
        vocabulary: Vocabulary::from(words),
        authors,
        class_names: (0..spec.topics).map(|k| format!("class{k}")).collect(),
    };
    corpus.ensure_fallback_author();
    split(&mut corpus, spec.test_fraction, &mut rng).expect("valid test fraction");
    let graph = CitationGraph::new(spec.docs, pairs);
    let report = IngestReport::compute(&corpus, &graph);
    debug_assert_eq!(corpus.vocabulary.len(), v);
    SyntheticCorpus {
        dataset: Dataset {
            corpus,
            graph,
            report,
        },
        seed_words: (0..spec.topics)
            .map(|k| {
                (0..spec.seed_words)
                    .map(|r| (k * spec.words_per_topic + r) as u32)
                    .collect()
            })
            .collect(),
    }
}

/// The corpus as generic records, for exercising the ingestion pipeline.
pub fn to_records(data: &Dataset) -> Vec<Record> {
    let corpus = &data.corpus;
    let mut cites: Vec<Vec<String>> = vec![Vec::new(); corpus.documents.len()];
    for &(i, j) in data.graph.edges() {
        if i != j {
            cites[i as usize].push(corpus.documents[j as usize].id.clone());
        }
    }
    corpus
        .documents
        .iter()
        .zip(cites)
        .map(|(doc, citations)| {
            let text = |ts: &[u32]| {
                ts.iter()
                    .map(|&w| corpus.vocabulary.word(w))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            Record {
                id: doc.id.clone(),
                title: text(doc.title_tokens()),
                abstract_text: text(doc.body_tokens()),
                authors: doc
                    .first_author
                    .map(|a| vec![corpus.authors[a as usize].name.clone()])
                    .unwrap_or_default(),
                citations,
                label: doc.label.map(|l| corpus.class_names[l as usize].clone()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = SyntheticSpec::default();
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a.dataset, b.dataset);
        let c = &a.dataset.corpus;
        assert_eq!(c.documents.len(), 200);
        assert_eq!(c.vocabulary.len(), 150);
        assert_eq!(c.test_indices().len(), 20);
        assert!(c.documents.iter().all(|d| d.tokens.len() == 46 && d.title_len == 6));
        for doc in &c.documents {
            let label = doc.label.unwrap() as usize;
            assert!(doc
                .title_tokens()
                .iter()
                .all(|&w| w as usize / spec.words_per_topic == label));
        }
        assert!(a.dataset.graph.citation_count() > 500);
    }

    #[test]
    fn authorship_is_long_tailed() {
        let data = generate(&SyntheticSpec::default()).dataset;
        let mut pubs = vec![0; 60];
        for d in &data.corpus.documents {
            pubs[d.first_author.unwrap() as usize] += 1;
        }
        assert!(pubs[0] > 20);
        assert!(pubs.iter().filter(|&&p| p <= 1).count() > 10);
    }
}
