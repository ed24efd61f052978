//! Human-readable summaries of a trained model: topic top words, author
//! preferences and an author-topic graph in DOT.

use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::eval::dominant_topic;
use crate::model::ModelState;

pub const NO_PREFERENCE: &str = "no preference";

/// Indices of the `n` largest entries, largest first, ties by index.
pub fn top_indices(dist: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicSummary {
    pub topic: u32,
    pub weight: f64,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthorSummary {
    pub name: String,
    pub dummy: bool,
    /// `None` when the author holds no customers.
    pub topic: Option<u32>,
    pub words: Vec<String>,
}

/// Active topics ordered by slot, each with its top `n` words under `φ̂_k`.
pub fn topic_summaries(state: &ModelState, corpus: &Corpus, n: usize) -> Vec<TopicSummary> {
    let phi = state.phi_estimates();
    let root = state.root_estimate();
    (0..state.topic_cap() as u32)
        .filter(|&k| state.is_topic_active(k))
        .map(|k| TopicSummary {
            topic: k,
            weight: root[k as usize],
            words: top_indices(&phi[k as usize], n)
                .into_iter()
                .map(|w| corpus.vocabulary.word(w as u32).to_string())
                .collect(),
        })
        .collect()
}

pub fn author_summaries(state: &ModelState, corpus: &Corpus, n: usize) -> Vec<AuthorSummary> {
    let topics = topic_summaries(state, corpus, n);
    corpus
        .authors
        .iter()
        .enumerate()
        .map(|(a, author)| {
            let topic = (state.author_customers(a as u32) > 0)
                .then(|| dominant_topic(&state.author_estimate(a as u32)) as u32);
            let words = topic
                .and_then(|k| topics.iter().find(|t| t.topic == k))
                .map(|t| t.words.clone())
                .unwrap_or_default();
            AuthorSummary {
                name: author.name.clone(),
                dummy: author.dummy,
                topic,
                words,
            }
        })
        .collect()
}

pub fn render_report(state: &ModelState, corpus: &Corpus, n: usize) -> String {
    let mut s = String::new();
    writeln!(s, "[topics]").unwrap();
    for t in topic_summaries(state, corpus, n) {
        writeln!(s, "topic {} ({:.4}): {}", t.topic, t.weight, t.words.join(", ")).unwrap();
    }
    if state.variant().has_authors() {
        writeln!(s, "\n[authors]").unwrap();
        for a in author_summaries(state, corpus, n) {
            let tag = if a.dummy { " (dummy)" } else { "" };
            match a.topic {
                Some(k) => writeln!(s, "{}{tag}: topic {k}: {}", a.name, a.words.join(", ")),
                None => writeln!(s, "{}{tag}: {NO_PREFERENCE}", a.name),
            }
            .unwrap();
        }
    }
    s
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Directed author → topic graph with an edge wherever `ν̂_ak > threshold`.
pub fn export_dot(state: &ModelState, corpus: &Corpus, threshold: f64, n_words: usize) -> String {
    let mut s = String::from("digraph author_topics {\n  rankdir=LR;\n");
    let topics = topic_summaries(state, corpus, n_words);
    for t in &topics {
        writeln!(
            s,
            "  t{} [shape=box, label=\"topic {}\\n{}\"];",
            t.topic,
            t.topic,
            dot_escape(&t.words.join(" "))
        )
        .unwrap();
    }
    if state.variant().has_authors() {
        for (a, author) in corpus.authors.iter().enumerate() {
            if state.author_customers(a as u32) == 0 {
                continue;
            }
            writeln!(s, "  a{a} [shape=ellipse, label=\"{}\"];", dot_escape(&author.name)).unwrap();
            let nu = state.author_estimate(a as u32);
            for t in &topics {
                let wt = nu[t.topic as usize];
                if wt > threshold {
                    writeln!(s, "  a{a} -> t{} [weight={wt:.4}, penwidth={:.2}];", t.topic, 1.0 + 4.0 * wt)
                        .unwrap();
                }
            }
        }
    }
    s.push_str("}\n");
    s
}
