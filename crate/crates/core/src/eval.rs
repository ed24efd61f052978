//! Document-completion perplexity and clustering metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::model::{ModelError, ModelState};
use crate::pyp::{BaseMeasure, Hierarchy, NodeId, NodeKind};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no documents to evaluate")]
    Empty,
    #[error("cluster and class assignments differ in length ({0} vs {1})")]
    Length(usize, usize),
}

/// Fold-in schedule for unseen documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldIn {
    pub sweeps: usize,
    pub burn_in: usize,
}

impl Default for FoldIn {
    fn default() -> Self {
        Self {
            sweeps: 50,
            burn_in: 10,
        }
    }
}

/// Frozen view of a trained model for scoring unseen documents.
pub struct Evaluator<'a> {
    state: &'a ModelState,
    phi: Vec<Vec<f64>>,
    schedule: FoldIn,
}

impl<'a> Evaluator<'a> {
    pub fn new(state: &'a ModelState, schedule: FoldIn) -> Self {
        Self {
            state,
            phi: state.phi_estimates(),
            schedule,
        }
    }

    pub fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    /// Whether `w` occurred in the training documents.
    pub fn in_training(&self, w: u32) -> bool {
        self.state
            .word_counts()
            .get(w as usize)
            .is_some_and(|&c| c > 0)
    }

    /// Estimate `θ̂` of an unseen document of `author` from `tokens` alone.
    ///
    /// Fresh document nodes are hung below a fixed copy of the author's
    /// estimated distribution and resampled against the frozen `φ̂`; the
    /// trained counts are never touched. The estimate is averaged over the
    /// sweeps after burn-in.
    pub fn estimate_test_theta<R: Rng + ?Sized>(
        &self,
        tokens: &[u32],
        author: u32,
        rng: &mut R,
    ) -> Result<Vec<f64>, ModelError> {
        let cap = self.state.topic_cap();
        let parent = self.state.author_estimate(author);
        let tokens: Vec<u32> = tokens.iter().copied().filter(|&w| self.in_training(w)).collect();
        let (mut h, theta) = self.document_chain(parent)?;
        if tokens.is_empty() || self.schedule.sweeps == 0 {
            return Ok(h.estimate(theta, cap));
        }
        let mut z = Vec::with_capacity(tokens.len());
        let mut weights = vec![0.0; cap];
        for &w in &tokens {
            let k = self.draw(&mut h, theta, w, &mut weights, rng);
            h.add_customer(theta, k, rng)?;
            z.push(k);
        }
        let mut acc = vec![0.0; cap];
        let mut kept = 0;
        for sweep in 0..self.schedule.sweeps {
            for (n, &w) in tokens.iter().enumerate() {
                if h.remove_customer(theta, z[n], rng)?.is_none() {
                    continue;
                }
                let k = self.draw(&mut h, theta, w, &mut weights, rng);
                h.add_customer(theta, k, rng)?;
                z[n] = k;
            }
            if sweep >= self.schedule.burn_in {
                for (a, p) in acc.iter_mut().zip(h.estimate(theta, cap)) {
                    *a += p;
                }
                kept += 1;
            }
        }
        if kept == 0 {
            return Ok(h.estimate(theta, cap));
        }
        Ok(acc.into_iter().map(|a| a / kept as f64).collect())
    }

    fn document_chain(&self, parent: Vec<f64>) -> Result<(Hierarchy, NodeId), ModelError> {
        let topics = self.state.topics();
        let levels = self.state.levels();
        let mut h = Hierarchy::new(BaseMeasure::Fixed(parent));
        let mut above = None;
        if let Some(l) = levels.theta_prime {
            let lvl = h.add_level("theta_prime", topics.params(l))?;
            above = Some(h.add_node(lvl, None, NodeKind::Pyp, false, true));
        }
        let lvl = h.add_level("theta", topics.params(levels.theta))?;
        let theta = h.add_node(lvl, above, NodeKind::Pyp, true, true);
        Ok((h, theta))
    }

    fn draw<R: Rng + ?Sized>(
        &self,
        h: &mut Hierarchy,
        theta: NodeId,
        w: u32,
        weights: &mut [f64],
        rng: &mut R,
    ) -> u32 {
        let mut total = 0.0;
        for (k, slot) in weights.iter_mut().enumerate() {
            *slot = h.predictive(theta, k as u32) * self.phi[k][w as usize];
            total += *slot;
        }
        let mut u = rng.gen::<f64>() * total;
        for (k, &p) in weights.iter().enumerate() {
            if u < p {
                return k as u32;
            }
            u -= p;
        }
        weights.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
    }
}

/// `log Σ_k φ̂_kw θ̂_k`.
pub fn token_log_prob(phi: &[Vec<f64>], theta: &[f64], w: u32) -> f64 {
    phi.iter()
        .zip(theta)
        .map(|(row, t)| row[w as usize] * t)
        .sum::<f64>()
        .ln()
}

/// `exp(−Σ_d Σ_n log p(w_dn) / Σ_d N_d)` over `(θ̂_d, tokens)` pairs.
pub fn perplexity(phi: &[Vec<f64>], docs: &[(Vec<f64>, Vec<u32>)]) -> Result<f64, EvalError> {
    let mut ll = 0.0;
    let mut n = 0usize;
    for (theta, tokens) in docs {
        for &w in tokens {
            ll += token_log_prob(phi, theta, w);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok((-ll / n as f64).exp())
}

/// Argmax with ties going to the lowest index.
pub fn dominant_topic(dist: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = k;
        }
    }
    best
}

fn contingency(clusters: &[u32], classes: &[u32]) -> Result<BTreeMap<(u32, u32), usize>, EvalError> {
    if clusters.len() != classes.len() {
        return Err(EvalError::Length(clusters.len(), classes.len()));
    }
    if clusters.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut table = BTreeMap::new();
    for (&s, &r) in clusters.iter().zip(classes) {
        *table.entry((s, r)).or_insert(0) += 1;
    }
    Ok(table)
}

fn marginal(labels: &[u32]) -> BTreeMap<u32, usize> {
    let mut m = BTreeMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

/// `(1/D) Σ_k max_j |s_k ∩ r_j|`.
pub fn purity(clusters: &[u32], classes: &[u32]) -> Result<f64, EvalError> {
    let table = contingency(clusters, classes)?;
    let mut best: BTreeMap<u32, usize> = BTreeMap::new();
    for (&(s, _), &n) in &table {
        let b = best.entry(s).or_insert(0);
        *b = (*b).max(n);
    }
    Ok(best.values().sum::<usize>() as f64 / clusters.len() as f64)
}

fn entropy(counts: &BTreeMap<u32, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `2 I(S;R) / (H(S) + H(R))` in bits; zero when both entropies vanish.
pub fn nmi(clusters: &[u32], classes: &[u32]) -> Result<f64, EvalError> {
    let table = contingency(clusters, classes)?;
    let n = clusters.len() as f64;
    let ms = marginal(clusters);
    let mr = marginal(classes);
    let mut info = 0.0;
    for (&(s, r), &c) in &table {
        let c = c as f64;
        info += c / n * (n * c / (ms[&s] as f64 * mr[&r] as f64)).log2();
    }
    let denom = entropy(&ms, n) + entropy(&mr, n);
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * info / denom).clamp(0.0, 1.0))
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub perplexity_train: Option<f64>,
    pub perplexity_test: Option<f64>,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
    pub k_active: usize,
    pub oov_skipped: usize,
    pub test_tokens: usize,
    pub notes: Vec<String>,
}

impl Metrics {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut opt = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                writeln!(s, "{name} = {v}").unwrap();
            }
        };
        opt("perplexity_train", self.perplexity_train);
        opt("perplexity_test", self.perplexity_test);
        opt("purity", self.purity);
        opt("nmi", self.nmi);
        writeln!(s, "K_active = {}", self.k_active).unwrap();
        writeln!(s, "oov_skipped = {}", self.oov_skipped).unwrap();
        writeln!(s, "test_tokens = {}", self.test_tokens).unwrap();
        for note in &self.notes {
            writeln!(s, "# {note}").unwrap();
        }
        s
    }

    /// Values by name, as used for aggregation across chains.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let mut v = Vec::new();
        for (name, x) in [
            ("perplexity_train", self.perplexity_train),
            ("perplexity_test", self.perplexity_test),
            ("purity", self.purity),
            ("nmi", self.nmi),
        ] {
            if let Some(x) = x {
                v.push((name, x));
            }
        }
        v.push(("K_active", self.k_active as f64));
        v
    }
}

/// Dominant topic of every training document, in model order.
pub fn training_clusters(state: &ModelState) -> Vec<u32> {
    (0..state.num_docs())
        .map(|d| dominant_topic(&state.theta_estimate(d)) as u32)
        .collect()
}

/// Train and test perplexity plus clustering quality over the training
/// documents when every one of them is labeled.
pub fn evaluate<R: Rng + ?Sized>(
    state: &ModelState,
    corpus: &Corpus,
    schedule: FoldIn,
    rng: &mut R,
) -> Result<Metrics, ModelError> {
    let ev = Evaluator::new(state, schedule);
    let mut metrics = Metrics {
        k_active: state.active_topics(),
        ..Default::default()
    };

    let train: Vec<(Vec<f64>, Vec<u32>)> = (0..state.num_docs())
        .map(|d| (state.theta_estimate(d), state.docs()[d].tokens.clone()))
        .collect();
    metrics.perplexity_train = perplexity(ev.phi(), &train).ok();

    let mut test = Vec::new();
    for d in corpus.test_indices() {
        let doc = &corpus.documents[d];
        let author = corpus.effective_author(d);
        let theta = ev.estimate_test_theta(doc.title_tokens(), author, rng)?;
        let mut kept = Vec::new();
        for &w in doc.body_tokens() {
            if ev.in_training(w) {
                kept.push(w);
            } else {
                metrics.oov_skipped += 1;
            }
        }
        metrics.test_tokens += kept.len();
        test.push((theta, kept));
    }
    metrics.perplexity_test = perplexity(ev.phi(), &test).ok();
    if metrics.perplexity_test.is_none() {
        metrics.notes.push("no test tokens; test perplexity omitted".into());
    }

    let labels: Option<Vec<u32>> = state
        .docs()
        .iter()
        .map(|d| corpus.documents[d.corpus_index].label)
        .collect();
    match labels {
        Some(classes) if !classes.is_empty() => {
            let clusters = training_clusters(state);
            metrics.purity = purity(&clusters, &classes).ok();
            metrics.nmi = nmi(&clusters, &classes).ok();
        }
        _ => metrics
            .notes
            .push("documents lack class labels; clustering metrics omitted".into()),
    }
    Ok(metrics)
}
