//! Model configuration, the wiring of both PYP hierarchies, network state and
//! checkpoints.
//!
//! Topic side (keys are topic slots):
//!
//! ```text
//! μ (GEM) ─ ν_a (per author) ─ θ′_d ─ θ_d
//! ```
//!
//! Word side (keys are vocabulary indices):
//!
//! ```text
//! uniform(|V|) ─ γ ─ φ_k (per topic) ─ φ′_dk (per document and topic)
//! ```
//!
//! Words are customers at `θ_d` and `φ′_dk`; citation endpoints are direct
//! customers at `θ′_d`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Dataset};
use crate::pyp::{BaseMeasure, Hierarchy, LevelId, NodeId, NodeKind, PypError, PypParams, Violation};
use crate::stirling::StirlingError;

pub const CHECKPOINT_VERSION: &str = "cntm-checkpoint-1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pyp(#[from] PypError),
    #[error(transparent)]
    Stirling(#[from] StirlingError),
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found:?} is not supported (expected {expected:?})")]
    Version { found: String, expected: String },
    #[error("checkpoint was trained on a different corpus")]
    CorpusMismatch,
    #[error("training aborted at iteration {0}")]
    Aborted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Authors, θ′/θ split and the citation network.
    Full,
    /// As `Full` without the citation network.
    NoNetwork,
    /// Documents draw directly from their author's distribution.
    Atm,
    /// No author level; every document hangs off the root.
    HdpLda,
}

impl Variant {
    pub fn has_network(self) -> bool {
        self == Variant::Full
    }

    pub fn has_authors(self) -> bool {
        self != Variant::HdpLda
    }

    pub fn has_theta_prime(self) -> bool {
        matches!(self, Variant::Full | Variant::NoNetwork)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoNetwork => "no-network",
            Variant::Atm => "atm",
            Variant::HdpLda => "hdp-lda",
        })
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" | "cntm" => Ok(Variant::Full),
            "no-network" => Ok(Variant::NoNetwork),
            "atm" => Ok(Variant::Atm),
            "hdp-lda" | "hdp-lda-bursty" | "hdp" => Ok(Variant::HdpLda),
            other => Err(ModelError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Maximum number of topics, or the exact number when `fixed_k` is set.
    pub topic_cap: usize,
    /// Use a fixed set of `topic_cap` topics under a uniform root base
    /// instead of the capped GEM root.
    pub fixed_k: bool,
    /// Discount of μ, ν, θ′ and θ.
    pub topic_discount: f64,
    /// Discount of γ, φ and φ′.
    pub word_discount: f64,
    pub initial_concentration: f64,
    /// Gamma prior `(τ₀, τ₁)` on every concentration.
    pub concentration_shape: f64,
    pub concentration_rate: f64,
    /// Gamma prior `(ε₀, ε₁)` on λ⁺, λ⁻ and λᵀ.
    pub lambda_shape: f64,
    pub lambda_rate: f64,
    pub iterations: usize,
    pub network_start: usize,
    pub sample_hyperparameters: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            topic_cap: 20,
            fixed_k: false,
            topic_discount: 0.01,
            word_discount: 0.7,
            initial_concentration: 0.1,
            concentration_shape: 1.0,
            concentration_rate: 1.0,
            lambda_shape: 1.0,
            lambda_rate: 1.0,
            iterations: 2000,
            network_start: 1000,
            sample_hyperparameters: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.topic_cap == 0 {
            return err("topic_cap must be at least 1".into());
        }
        if self.topic_cap >= u32::MAX as usize {
            return err("topic_cap too large".into());
        }
        for (name, d) in [
            ("topic_discount", self.topic_discount),
            ("word_discount", self.word_discount),
        ] {
            if !(0.0..1.0).contains(&d) {
                return err(format!("{name} {d} outside [0, 1)"));
            }
        }
        for (name, v) in [
            ("initial_concentration", self.initial_concentration),
            ("concentration_shape", self.concentration_shape),
            ("concentration_rate", self.concentration_rate),
            ("lambda_shape", self.lambda_shape),
            ("lambda_rate", self.lambda_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Per-document data held by the model (training documents only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocState {
    /// Index into the corpus document list.
    pub corpus_index: usize,
    pub author: u32,
    pub tokens: Vec<u32>,
    pub z: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// `(citing, cited)` in local document indices, diagonal included.
    pub edges: Vec<(u32, u32)>,
    /// Citing topic per edge; meaningful once `initialized`.
    pub y: Vec<u32>,
    /// `h_ik`, row-major `docs × topic_cap`.
    pub h: Vec<u32>,
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    pub lambda_topic: Vec<f64>,
    pub out_degree: Vec<u32>,
    pub in_degree: Vec<u32>,
    pub initialized: bool,
}

impl NetworkState {
    pub fn h_row(&self, doc: usize, cap: usize) -> &[u32] {
        &self.h[doc * cap..(doc + 1) * cap]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Levels {
    pub mu: LevelId,
    pub nu: Option<LevelId>,
    pub theta_prime: Option<LevelId>,
    pub theta: LevelId,
    pub gamma: LevelId,
    pub phi: LevelId,
    pub phi_prime: LevelId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelState {
    pub(crate) config: ModelConfig,
    pub(crate) topics: Hierarchy,
    pub(crate) words: Hierarchy,
    pub(crate) levels: Levels,
    pub(crate) mu: NodeId,
    pub(crate) nu: Vec<NodeId>,
    pub(crate) theta_prime: Vec<NodeId>,
    pub(crate) theta: Vec<NodeId>,
    pub(crate) gamma: NodeId,
    pub(crate) phi: Vec<NodeId>,
    /// Row-major `docs × topic_cap`.
    pub(crate) phi_prime: Vec<NodeId>,
    pub(crate) docs: Vec<DocState>,
    pub(crate) vocab_size: usize,
    /// Training-set occurrences of each vocabulary entry.
    pub(crate) word_counts: Vec<u32>,
    pub(crate) network: Option<NetworkState>,
    pub(crate) iteration: usize,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) corpus_hash: String,
}

impl ModelState {
    /// Wire the hierarchies for the training documents of `data` without
    /// seating any customers.
    pub fn empty(data: &Dataset, config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let corpus = &data.corpus;
        let cap = config.topic_cap;
        let variant = config.variant;
        let train = corpus.train_indices();

        let root_base = if config.fixed_k {
            BaseMeasure::Uniform { size: cap }
        } else {
            BaseMeasure::NewLabel
        };
        let topic_params = PypParams::new(config.topic_discount, config.initial_concentration);
        let word_params = PypParams::new(config.word_discount, config.initial_concentration);
        let mut topics = Hierarchy::new(root_base);
        let mu_level = topics.add_level("mu", topic_params)?;
        let nu_level = if variant.has_authors() {
            Some(topics.add_level("nu", topic_params)?)
        } else {
            None
        };
        let tp_level = if variant.has_theta_prime() {
            Some(topics.add_level("theta_prime", topic_params)?)
        } else {
            None
        };
        let theta_level = topics.add_level("theta", topic_params)?;
        let root_kind = if config.fixed_k { NodeKind::Pyp } else { NodeKind::Gem };
        let mu = topics.add_node(mu_level, None, root_kind, false, true);
        let nu: Vec<NodeId> = match nu_level {
            Some(l) => (0..corpus.authors.len())
                .map(|_| topics.add_node(l, Some(mu), NodeKind::Pyp, false, true))
                .collect(),
            None => Vec::new(),
        };
        let docs: Vec<DocState> = train
            .iter()
            .map(|&d| DocState {
                corpus_index: d,
                author: corpus.effective_author(d),
                tokens: corpus.documents[d].tokens.clone(),
                z: Vec::new(),
            })
            .collect();
        let mut theta_prime = Vec::new();
        let mut theta = Vec::with_capacity(docs.len());
        for doc in &docs {
            let parent = match nu_level {
                Some(_) => nu[doc.author as usize],
                None => mu,
            };
            let parent = match tp_level {
                Some(l) => {
                    let open = variant.has_network();
                    let id = topics.add_node(l, Some(parent), NodeKind::Pyp, open, false);
                    theta_prime.push(id);
                    id
                }
                None => parent,
            };
            theta.push(topics.add_node(theta_level, Some(parent), NodeKind::Pyp, true, false));
        }

        let vocab_size = corpus.vocabulary.len();
        if vocab_size == 0 {
            return Err(ModelError::Config("empty vocabulary".into()));
        }
        let mut words = Hierarchy::new(BaseMeasure::Uniform { size: vocab_size });
        let gamma_level = words.add_level("gamma", word_params)?;
        let phi_level = words.add_level("phi", word_params)?;
        let pp_level = words.add_level("phi_prime", word_params)?;
        let gamma = words.add_node(gamma_level, None, NodeKind::Pyp, false, true);
        let phi: Vec<NodeId> = (0..cap)
            .map(|_| words.add_node(phi_level, Some(gamma), NodeKind::Pyp, false, false))
            .collect();
        let mut phi_prime = Vec::with_capacity(docs.len() * cap);
        for _ in &docs {
            for &p in &phi {
                phi_prime.push(words.add_node(pp_level, Some(p), NodeKind::Pyp, true, false));
            }
        }

        let mut word_counts = vec![0u32; vocab_size];
        for doc in &docs {
            for &w in &doc.tokens {
                word_counts[w as usize] += 1;
            }
        }

        let network = if variant.has_network() {
            let sub = data.graph.restrict(&train);
            let n = docs.len();
            Some(NetworkState {
                edges: sub.edges().to_vec(),
                y: vec![0; sub.len()],
                h: vec![0; n * cap],
                lambda_plus: vec![1.0; n],
                lambda_minus: vec![1.0; n],
                lambda_topic: vec![1.0; cap],
                out_degree: (0..n).map(|i| sub.out_degree(i)).collect(),
                in_degree: (0..n).map(|i| sub.in_degree(i)).collect(),
                initialized: false,
            })
        } else {
            None
        };

        Ok(Self {
            config: config.clone(),
            topics,
            words,
            levels: Levels {
                mu: mu_level,
                nu: nu_level,
                theta_prime: tp_level,
                theta: theta_level,
                gamma: gamma_level,
                phi: phi_level,
                phi_prime: pp_level,
            },
            mu,
            nu,
            theta_prime,
            theta,
            gamma,
            phi,
            phi_prime,
            docs,
            vocab_size,
            word_counts,
            network,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            corpus_hash: corpus.table_hash(),
        })
    }

    /// Assign every training token a uniformly random topic slot and seat it
    /// in both hierarchies.
    pub fn init_random(data: &Dataset, config: &ModelConfig) -> Result<Self, ModelError> {
        let mut state = Self::empty(data, config)?;
        let mut rng = state.rng.clone();
        let cap = state.config.topic_cap as u32;
        for d in 0..state.docs.len() {
            let n = state.docs[d].tokens.len();
            let mut z = Vec::with_capacity(n);
            for i in 0..n {
                let w = state.docs[d].tokens[i];
                let k = rng.gen_range(0..cap);
                state.topics.add_customer(state.theta[d], k, &mut rng)?;
                let pp = state.phi_prime_node(d, k);
                state.words.add_customer(pp, w, &mut rng)?;
                z.push(k);
            }
            state.docs[d].z = z;
        }
        state.rng = rng;
        Ok(state)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn topic_cap(&self) -> usize {
        self.config.topic_cap
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn docs(&self) -> &[DocState] {
        &self.docs
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn word_counts(&self) -> &[u32] {
        &self.word_counts
    }

    pub fn network(&self) -> Option<&NetworkState> {
        self.network.as_ref()
    }

    pub fn topics(&self) -> &Hierarchy {
        &self.topics
    }

    pub fn words(&self) -> &Hierarchy {
        &self.words
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(|d| d.tokens.len()).sum()
    }

    pub(crate) fn phi_prime_node(&self, d: usize, k: u32) -> NodeId {
        self.phi_prime[d * self.config.topic_cap + k as usize]
    }

    pub fn theta_node(&self, d: usize) -> NodeId {
        self.theta[d]
    }

    pub fn theta_prime_node(&self, d: usize) -> Option<NodeId> {
        self.theta_prime.get(d).copied()
    }

    pub fn author_node(&self, a: u32) -> Option<NodeId> {
        self.nu.get(a as usize).copied()
    }

    pub fn root_node(&self) -> NodeId {
        self.mu
    }

    pub fn is_topic_active(&self, k: u32) -> bool {
        self.topics.node(self.mu).tally(k).customers > 0
    }

    /// Number of topic slots in use at the root.
    pub fn active_topics(&self) -> usize {
        (0..self.config.topic_cap as u32)
            .filter(|&k| self.is_topic_active(k))
            .count()
    }

    /// Node whose topic distribution feeds a new document of `author`.
    pub fn document_parent(&self, author: u32) -> NodeId {
        match self.nu.get(author as usize) {
            Some(&n) => n,
            None => self.mu,
        }
    }

    /// `θ̂_d` over all topic slots.
    pub fn theta_estimate(&self, d: usize) -> Vec<f64> {
        self.topics.estimate(self.theta[d], self.config.topic_cap)
    }

    /// `θ̂′_d` over all topic slots (`θ̂_d`'s parent when there is no θ′ level).
    pub fn theta_prime_estimate(&self, d: usize) -> Vec<f64> {
        let node = match self.theta_prime.get(d) {
            Some(&n) => n,
            None => self.topics.node(self.theta[d]).parent.expect("θ has a parent"),
        };
        self.topics.estimate(node, self.config.topic_cap)
    }

    /// `ν̂_a`, or `μ̂` when the variant has no author level.
    pub fn author_estimate(&self, author: u32) -> Vec<f64> {
        self.topics
            .estimate(self.document_parent(author), self.config.topic_cap)
    }

    pub fn root_estimate(&self) -> Vec<f64> {
        self.topics.estimate(self.mu, self.config.topic_cap)
    }

    /// `φ̂_k` for every topic slot.
    pub fn phi_estimates(&self) -> Vec<Vec<f64>> {
        let gamma = self.words.estimate(self.gamma, self.vocab_size);
        self.phi
            .iter()
            .map(|&p| self.words.estimate_with_parent(p, &gamma))
            .collect()
    }

    /// Author customer count at ν, zero when the variant has no author level.
    pub fn author_customers(&self, author: u32) -> u64 {
        self.nu
            .get(author as usize)
            .map(|&n| self.topics.node(n).total_customers())
            .unwrap_or(0)
    }

    /// `θ̂′` of every document as a row-major `docs × cap` matrix.
    pub fn theta_prime_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.docs.len() * self.config.topic_cap);
        for d in 0..self.docs.len() {
            out.extend(self.theta_prime_estimate(d));
        }
        out
    }

    /// Factorized exponential term `E = Σ_k λᵀ_k A_k B_k` with
    /// `A_k = Σ_i λ⁺_i θ̂′_ik` and `B_k = Σ_j λ⁻_j θ̂′_jk`.
    pub fn network_energy(&self, theta_prime: &[f64]) -> f64 {
        let Some(net) = &self.network else { return 0.0 };
        let cap = self.config.topic_cap;
        let (a, b) = network_sums(net, theta_prime, cap);
        (0..cap).map(|k| net.lambda_topic[k] * a[k] * b[k]).sum()
    }

    /// Log joint of the collapsed topic model plus, once the network is
    /// initialized, the network terms.
    pub fn log_joint(&mut self) -> f64 {
        let mut acc = self.topics.log_likelihood() + self.words.log_likelihood();
        if let Some(net) = &self.network {
            if net.initialized {
                let cap = self.config.topic_cap;
                for i in 0..self.docs.len() {
                    acc += net.out_degree[i] as f64 * net.lambda_plus[i].ln();
                    acc += net.in_degree[i] as f64 * net.lambda_minus[i].ln();
                }
                for k in 0..cap {
                    let hk: u64 = (0..self.docs.len()).map(|i| net.h[i * cap + k] as u64).sum();
                    acc += 0.5 * hk as f64 * net.lambda_topic[k].ln();
                }
                let tp = self.theta_prime_matrix();
                acc -= self.network_energy(&tp);
            }
        }
        acc
    }

    /// Hierarchy invariants plus the model-level identities: one customer
    /// per token on both sides, `θ′` customers equal to `θ` tables plus
    /// `h`, and `Σ_k h_ik = g⁺_i + g⁻_i`.
    pub fn consistency_check(&self) -> Vec<Violation> {
        let mut out = self.topics.consistency_check();
        out.extend(self.words.consistency_check().into_iter().map(|mut v| {
            v.message = format!("word side: {}", v.message);
            v
        }));
        let cap = self.config.topic_cap;
        for (d, doc) in self.docs.iter().enumerate() {
            let theta = self.topics.node(self.theta[d]);
            if theta.total_customers() != doc.tokens.len() as u64 || doc.z.len() != doc.tokens.len() {
                out.push(Violation {
                    node: self.theta[d],
                    key: None,
                    message: format!(
                        "document {d} has {} tokens but θ holds {} customers",
                        doc.tokens.len(),
                        theta.total_customers()
                    ),
                });
            }
            let mut per_topic = vec![0u64; cap];
            for &k in &doc.z {
                per_topic[k as usize] += 1;
            }
            for k in 0..cap {
                let c = theta.tally(k as u32).customers as u64;
                let pp = self.words.node(self.phi_prime_node(d, k as u32)).total_customers();
                if c != per_topic[k] || pp != per_topic[k] {
                    out.push(Violation {
                        node: self.theta[d],
                        key: Some(k as u32),
                        message: format!(
                            "assignments give {} tokens, θ has {}, φ′ has {}",
                            per_topic[k], c, pp
                        ),
                    });
                }
            }
            if let Some(&tp) = self.theta_prime.get(d) {
                let tp_node = self.topics.node(tp);
                for k in 0..cap {
                    let h = match &self.network {
                        Some(net) if net.initialized => net.h[d * cap + k] as u64,
                        _ => 0,
                    };
                    let expected = theta.tally(k as u32).tables as u64 + h;
                    let got = tp_node.tally(k as u32).customers as u64;
                    if got != expected {
                        out.push(Violation {
                            node: tp,
                            key: Some(k as u32),
                            message: format!(
                                "θ′ holds {got} customers, θ tables plus network counts give {expected}"
                            ),
                        });
                    }
                }
            }
        }
        if let Some(net) = &self.network {
            if net.initialized {
                let mut h = vec![0u32; net.h.len()];
                for (e, &(i, j)) in net.edges.iter().enumerate() {
                    h[i as usize * cap + net.y[e] as usize] += 1;
                    h[j as usize * cap + net.y[e] as usize] += 1;
                }
                for i in 0..self.docs.len() {
                    let row: u32 = net.h_row(i, cap).iter().sum();
                    if row != net.out_degree[i] + net.in_degree[i] || h[i * cap..(i + 1) * cap] != net.h[i * cap..(i + 1) * cap] {
                        out.push(Violation {
                            node: self.theta_prime[i],
                            key: None,
                            message: format!(
                                "network counts of document {i} disagree with citing topics"
                            ),
                        });
                    }
                }
            }
        }
        out
    }

    /// `Σ_i Σ_k h_ik`.
    pub fn network_count_total(&self) -> u64 {
        self.network
            .as_ref()
            .map(|n| n.h.iter().map(|&x| x as u64).sum())
            .unwrap_or(0)
    }

    pub fn concentrations(&self) -> Vec<(String, f64)> {
        self.topics
            .levels()
            .iter()
            .chain(self.words.levels())
            .map(|l| (l.name.clone(), l.params.concentration))
            .collect()
    }

    /// Rebuild derived caches after deserialization.
    pub fn restore(&mut self) -> Result<(), ModelError> {
        self.topics.restore_caches()?;
        self.words.restore_caches()?;
        Ok(())
    }

    /// Extend or shorten the run; training stops once `iteration` reaches it.
    pub fn set_iterations(&mut self, iterations: usize) {
        self.config.iterations = iterations;
    }

    pub fn to_checkpoint_string(&self) -> Result<String, ModelError> {
        let ckpt = CheckpointRef {
            version: CHECKPOINT_VERSION,
            state: self,
        };
        serde_json::to_string(&ckpt).map_err(|e| ModelError::Corrupt(e.to_string()))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), ModelError> {
        let text = self.to_checkpoint_string()?;
        fs::write(path, text).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_checkpoint_str(&text)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ModelError::Corrupt("missing version tag".into()))?;
        if found != CHECKPOINT_VERSION {
            return Err(ModelError::Version {
                found: found.to_string(),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let mut state = ckpt.state;
        state.restore()?;
        let violations = state.consistency_check();
        if let Some(v) = violations.first() {
            return Err(ModelError::Corrupt(v.to_string()));
        }
        Ok(state)
    }

    /// Fail unless the state was trained on `corpus`.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<(), ModelError> {
        if self.corpus_hash == corpus.table_hash() {
            Ok(())
        } else {
            Err(ModelError::CorpusMismatch)
        }
    }
}

/// `A_k = Σ_i λ⁺_i θ̂′_ik` and `B_k = Σ_j λ⁻_j θ̂′_jk`.
pub fn network_sums(net: &NetworkState, theta_prime: &[f64], cap: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; cap];
    let mut b = vec![0.0; cap];
    for (i, row) in theta_prime.chunks(cap).enumerate() {
        for k in 0..cap {
            a[k] += net.lambda_plus[i] * row[k];
            b[k] += net.lambda_minus[i] * row[k];
        }
    }
    (a, b)
}

#[derive(Serialize)]
struct CheckpointRef<'a> {
    version: &'a str,
    state: &'a ModelState,
}

#[derive(Deserialize)]
struct Checkpoint {
    #[allow(dead_code)]
    version: String,
    state: ModelState,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CitationGraph, Document, IngestReport, Split, Vocabulary};
    use crate::pyp::PypParams;
    use crate::stirling::log_pochhammer;

    fn one_token() -> Dataset {
        let corpus = Corpus {
            documents: vec![Document {
                id: "d".into(),
                tokens: vec![1],
                title_len: 0,
                first_author: None,
                label: None,
                split: Split::Train,
            }],
            vocabulary: Vocabulary::from(vec!["a".to_string(), "b".to_string(), "c".to_string()]),
            authors: vec![],
            class_names: vec![],
        };
        let mut corpus = corpus;
        corpus.ensure_fallback_author();
        let graph = CitationGraph::new(1, []);
        let report = IngestReport::compute(&corpus, &graph);
        Dataset {
            corpus,
            graph,
            report,
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [Variant::Full, Variant::NoNetwork, Variant::Atm, Variant::HdpLda] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("lda".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.topic_cap = 0;
        assert!(c.validate().is_err());
        let c = ModelConfig {
            word_discount: 1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            initial_concentration: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_token_log_joint_by_hand() {
        let data = one_token();
        let config = ModelConfig {
            variant: Variant::NoNetwork,
            topic_cap: 1,
            topic_discount: 0.3,
            word_discount: 0.5,
            initial_concentration: 0.7,
            ..Default::default()
        };
        let mut state = ModelState::init_random(&data, &config).unwrap();
        assert!(state.consistency_check().is_empty());
        // every node on both chains holds one customer at one table:
        // f = (β|α)_1 / (β)_1 · S^1_1 = 1, and the uniform base contributes 1/|V|
        let expected = -(3f64).ln();
        assert!((state.log_joint() - expected).abs() < 1e-12);
        let p = PypParams::new(0.3, 0.7);
        assert_eq!(log_pochhammer(p.concentration, p.discount, 1).unwrap(), 0.7f64.ln());
    }

    #[test]
    fn empty_corpus_log_joint_is_zero() {
        let mut data = one_token();
        data.corpus.documents[0].split = Split::Test;
        let mut state = ModelState::init_random(&data, &ModelConfig::default()).unwrap();
        assert_eq!(state.num_docs(), 0);
        assert_eq!(state.log_joint(), 0.0);
    }

    #[test]
    fn checkpoint_version_checked() {
        let data = one_token();
        let state = ModelState::init_random(&data, &ModelConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        state.save_checkpoint(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let bad = text.replacen(CHECKPOINT_VERSION, "cntm-checkpoint-0", 1);
        assert!(matches!(
            ModelState::from_checkpoint_str(&bad),
            Err(ModelError::Version { .. })
        ));
        assert!(matches!(
            ModelState::from_checkpoint_str("{not json"),
            Err(ModelError::Corrupt(_))
        ));
        let mut loaded = ModelState::load_checkpoint(&path).unwrap();
        let mut original = state.clone();
        assert_eq!(loaded.log_joint(), original.log_joint());
    }
}
