//! Independent oracles for the tests: exact integer Stirling numbers and an
//! explicit seating-arrangement enumerator for hierarchical restaurants.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cntm::corpus::{Author, CitationGraph, Corpus, Dataset, Document, IngestReport, Split, Vocabulary};

/// Unsigned Stirling numbers of the first kind, `c(n+1, m) = n c(n, m) + c(n, m-1)`.
pub fn stirling_first_kind(max_n: usize) -> Vec<Vec<u128>> {
    let mut t = vec![vec![0u128; max_n + 1]; max_n + 1];
    t[0][0] = 1;
    for n in 0..max_n {
        for m in 1..=n + 1 {
            t[n + 1][m] = n as u128 * t[n][m] + t[n][m - 1];
        }
    }
    t
}

/// Restaurants in a tree. Every table holds one dish; a new table orders
/// its dish from the parent restaurant, or from `base` at a root.
#[derive(Debug, Clone)]
pub struct RestaurantTree {
    pub parent: Vec<Option<usize>>,
    pub discount: Vec<f64>,
    pub concentration: Vec<f64>,
    pub base: Vec<f64>,
}

/// Per restaurant, the sorted list of `(dish, customers)` tables.
pub type Seating = Vec<Vec<(u32, u32)>>;

impl RestaurantTree {
    pub fn new(parent: Vec<Option<usize>>, discount: f64, concentration: f64, base: Vec<f64>) -> Self {
        let n = parent.len();
        Self {
            parent,
            discount: vec![discount; n],
            concentration: vec![concentration; n],
            base,
        }
    }

    pub fn empty(&self) -> Seating {
        vec![Vec::new(); self.parent.len()]
    }

    /// Every way a customer entering `node` ends up eating `dish`, with the
    /// probability of that path.
    pub fn seat(&self, s: &Seating, node: usize, dish: u32) -> Vec<(Seating, f64)> {
        let tables = &s[node];
        let c: u32 = tables.iter().map(|t| t.1).sum();
        let t = tables.len() as f64;
        let (a, b) = (self.discount[node], self.concentration[node]);
        let denom = b + c as f64;
        let mut out = Vec::new();
        for (j, &(d, n)) in tables.iter().enumerate() {
            if d == dish {
                let mut next = s.clone();
                next[node][j].1 += 1;
                next[node].sort();
                out.push((next, (n as f64 - a) / denom));
            }
        }
        let p_new = (b + a * t) / denom;
        let mut opened = s.clone();
        opened[node].push((dish, 1));
        opened[node].sort();
        match self.parent[node] {
            None => out.push((opened, p_new * self.base[dish as usize])),
            Some(p) => {
                for (next, q) in self.seat(&opened, p, dish) {
                    out.push((next, p_new * q));
                }
            }
        }
        out
    }

    /// Probability that customers entering `(node, dish)` in order all get
    /// their dish, summed over every seating arrangement.
    pub fn sequence_prob(&self, customers: &[(usize, u32)]) -> f64 {
        let mut states: BTreeMap<Seating, f64> = BTreeMap::new();
        states.insert(self.empty(), 1.0);
        for &(node, dish) in customers {
            let mut next: BTreeMap<Seating, f64> = BTreeMap::new();
            for (s, p) in &states {
                for (s2, q) in self.seat(s, node, dish) {
                    *next.entry(s2).or_insert(0.0) += p * q;
                }
            }
            states = next;
        }
        states.values().sum()
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v {
        *x /= s;
    }
}

/// A dataset built directly from token lists, authors and citation pairs;
/// every document is a training document.
pub fn tiny_dataset(
    docs: &[Vec<u32>],
    authors: &[u32],
    vocab: usize,
    pairs: &[(u32, u32)],
) -> Dataset {
    let n_authors = authors.iter().copied().max().map(|a| a + 1).unwrap_or(0);
    let corpus = Corpus {
        documents: docs
            .iter()
            .zip(authors)
            .enumerate()
            .map(|(i, (tokens, &a))| Document {
                id: format!("d{i}"),
                tokens: tokens.clone(),
                title_len: 0,
                first_author: Some(a),
                label: None,
                split: Split::Train,
            })
            .collect(),
        vocabulary: Vocabulary::from((0..vocab).map(|w| format!("w{w}")).collect::<Vec<_>>()),
        authors: (0..n_authors)
            .map(|a| Author {
                name: format!("A{a}"),
                dummy: false,
            })
            .collect(),
        class_names: vec![],
    };
    let graph = CitationGraph::new(docs.len(), pairs.iter().copied());
    let report = IngestReport::compute(&corpus, &graph);
    Dataset {
        corpus,
        graph,
        report,
    }
}
