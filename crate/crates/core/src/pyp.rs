//! Collapsed Pitman-Yor / GEM hierarchies.
//!
//! Every probability vector in the model is integrated out and represented by
//! per-key customer counts `c_k` and table counts `t_k`. A node's tables are
//! the customers of its parent. Nodes live in an arena ([`Hierarchy`]) so a
//! customer can be pushed up the chain of ancestors by following parent ids.
//!
//! Seating follows the marginal likelihood
//!
//! ```text
//! f(N) = (β|α)_T / (β)_C · ∏_k S^{c_k}_{t_k,α}
//! ```
//!
//! Each customer carries an indicator of whether it opened its table. Given
//! the other indicators, a new customer at key `k` joins with weight
//! `S^{c+1}_t / S^c_t · (c-t+1)/(c+1)` or opens a table with weight
//! `(β + αT) S^{c+1}_{t+1} / S^c_t · (t+1)/(c+1)` times the parent's
//! predictive probability of `k`, both over `β + C`. A departing customer
//! opened its table with probability `t / c`; a removal that would leave
//! customers without a table is refused and reported as pinned.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stirling::{log_pochhammer, StirlingCache, StirlingError};

#[derive(Debug, Error)]
pub enum PypError {
    #[error("node {node} has no customer at key {key} to remove")]
    Underflow { node: NodeId, key: u32 },
    #[error("key {key} cannot be seated at node {node}: all seating weights are zero")]
    Unseatable { node: NodeId, key: u32 },
    #[error("invalid forced indicator chain of length {depth} at node {node}")]
    InvalidIndicators { node: NodeId, depth: usize },
    #[error(transparent)]
    Stirling(#[from] StirlingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PypParams {
    pub discount: f64,
    pub concentration: f64,
}

impl PypParams {
    pub fn new(discount: f64, concentration: f64) -> Self {
        Self {
            discount,
            concentration,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.discount) && self.concentration > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Pyp,
    /// Stick-breaking root: at most one table per key.
    Gem,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub customers: u32,
    pub tables: u32,
}

/// Per-key tallies of one node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Counts {
    Dense(Vec<Tally>),
    /// Unordered `(key, tally)` pairs; entries are dropped when emptied.
    Sparse(Vec<(u32, Tally)>),
}

impl Counts {
    #[inline]
    pub fn get(&self, key: u32) -> Tally {
        match self {
            Counts::Dense(v) => v.get(key as usize).copied().unwrap_or_default(),
            Counts::Sparse(v) => v
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, t)| *t)
                .unwrap_or_default(),
        }
    }

    #[inline]
    fn get_mut(&mut self, key: u32) -> &mut Tally {
        match self {
            Counts::Dense(v) => {
                let i = key as usize;
                if i >= v.len() {
                    v.resize(i + 1, Tally::default());
                }
                &mut v[i]
            }
            Counts::Sparse(v) => {
                let pos = match v.iter().position(|(k, _)| *k == key) {
                    Some(p) => p,
                    None => {
                        v.push((key, Tally::default()));
                        v.len() - 1
                    }
                };
                &mut v[pos].1
            }
        }
    }

    fn prune(&mut self, key: u32) {
        if let Counts::Sparse(v) = self {
            if let Some(p) = v.iter().position(|(k, t)| *k == key && t.customers == 0) {
                v.swap_remove(p);
            }
        }
    }

    /// Keys with at least one customer or table.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (u32, Tally)> + '_> {
        match self {
            Counts::Dense(v) => Box::new(
                v.iter()
                    .enumerate()
                    .filter(|(_, t)| t.customers > 0 || t.tables > 0)
                    .map(|(k, t)| (k as u32, *t)),
            ),
            Counts::Sparse(v) => Box::new(
                v.iter()
                    .filter(|(_, t)| t.customers > 0 || t.tables > 0)
                    .copied(),
            ),
        }
    }

    #[cfg(test)]
    pub(crate) fn corrupt(&mut self, key: u32, tally: Tally) {
        *self.get_mut(key) = tally;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PypNode {
    pub level: LevelId,
    pub parent: Option<NodeId>,
    pub kind: NodeKind,
    /// Whether customers may be seated here directly (data, network counts),
    /// rather than only as tables of child nodes.
    pub open: bool,
    counts: Counts,
    customers: u64,
    tables: u64,
}

impl PypNode {
    pub fn tally(&self, key: u32) -> Tally {
        self.counts.get(key)
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    /// `C`
    pub fn total_customers(&self) -> u64 {
        self.customers
    }

    /// `T`
    pub fn total_tables(&self) -> u64 {
        self.tables
    }

    pub fn is_empty(&self) -> bool {
        self.customers == 0
    }
}

/// Distribution at the top of a hierarchy, above every root node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BaseMeasure {
    /// Discrete uniform over `size` keys.
    Uniform { size: usize },
    /// Fresh-label generator for a GEM root: every unused key has probability one.
    NewLabel,
    /// A fixed probability vector.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Level {
    pub name: String,
    pub params: PypParams,
}

/// Which and how many consecutive nodes of a chain opened a new table.
///
/// `opened` counts from the node the customer was added to; the chain stops
/// at the first node where the customer joined an existing table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndicatorOutcome {
    pub opened: usize,
    pub chain_len: usize,
}

impl IndicatorOutcome {
    pub fn opened_new_table(&self, depth: usize) -> bool {
        depth < self.opened
    }

    /// The customer reached the base measure (a new key at the top).
    pub fn reached_base(&self) -> bool {
        self.opened == self.chain_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node: NodeId,
    pub key: Option<u32>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.key {
            Some(k) => write!(f, "node {} key {}: {}", self.node, k, self.message),
            None => write!(f, "node {}: {}", self.node, self.message),
        }
    }
}

#[derive(Clone, Copy)]
struct SeatWeights {
    join: f64,
    open: f64,
    denom: f64,
}

/// Arena of collapsed PYP nodes sharing one base measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hierarchy {
    levels: Vec<Level>,
    nodes: Vec<PypNode>,
    base: BaseMeasure,
    level_nodes: Vec<Vec<NodeId>>,
    #[serde(skip)]
    caches: Vec<StirlingCache>,
    #[serde(skip)]
    level_cache: Vec<usize>,
}

const MAX_CHAIN: usize = 16;

impl Hierarchy {
    pub fn new(base: BaseMeasure) -> Self {
        Self {
            levels: Vec::new(),
            nodes: Vec::new(),
            base,
            level_nodes: Vec::new(),
            caches: Vec::new(),
            level_cache: Vec::new(),
        }
    }

    fn cache_for(&mut self, discount: f64) -> Result<usize, StirlingError> {
        if let Some(i) = self
            .caches
            .iter()
            .position(|c| c.discount().to_bits() == discount.to_bits())
        {
            return Ok(i);
        }
        self.caches.push(StirlingCache::new(discount)?);
        Ok(self.caches.len() - 1)
    }

    /// Rebuild the Stirling caches after deserialization.
    pub fn restore_caches(&mut self) -> Result<(), StirlingError> {
        self.caches.clear();
        self.level_cache.clear();
        for i in 0..self.levels.len() {
            let idx = self.cache_for(self.levels[i].params.discount)?;
            self.level_cache.push(idx);
        }
        Ok(())
    }

    pub fn add_level(&mut self, name: &str, params: PypParams) -> Result<LevelId, StirlingError> {
        let idx = self.cache_for(params.discount)?;
        self.levels.push(Level {
            name: name.to_string(),
            params,
        });
        self.level_cache.push(idx);
        self.level_nodes.push(Vec::new());
        Ok(LevelId(self.levels.len() as u16 - 1))
    }

    /// Add a node. Parents must be created before their children.
    pub fn add_node(
        &mut self,
        level: LevelId,
        parent: Option<NodeId>,
        kind: NodeKind,
        open: bool,
        dense: bool,
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        if let Some(p) = parent {
            assert!(p.0 < id.0, "parent must precede child");
        }
        self.nodes.push(PypNode {
            level,
            parent,
            kind,
            open,
            counts: if dense {
                Counts::Dense(Vec::new())
            } else {
                Counts::Sparse(Vec::new())
            },
            customers: 0,
            tables: 0,
        });
        self.level_nodes[level.0 as usize].push(id);
        id
    }

    pub fn node(&self, id: NodeId) -> &PypNode {
        &self.nodes[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn base(&self) -> &BaseMeasure {
        &self.base
    }

    pub fn set_base(&mut self, base: BaseMeasure) {
        self.base = base;
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level_nodes(&self, level: LevelId) -> &[NodeId] {
        &self.level_nodes[level.0 as usize]
    }

    pub fn params(&self, level: LevelId) -> PypParams {
        self.levels[level.0 as usize].params
    }

    pub fn node_params(&self, id: NodeId) -> PypParams {
        self.params(self.node(id).level)
    }

    pub fn set_concentration(&mut self, level: LevelId, concentration: f64) {
        assert!(concentration > 0.0);
        self.levels[level.0 as usize].params.concentration = concentration;
    }

    #[inline]
    pub fn base_prob(&self, key: u32) -> f64 {
        match &self.base {
            BaseMeasure::Uniform { size } => 1.0 / *size as f64,
            BaseMeasure::NewLabel => 1.0,
            BaseMeasure::Fixed(p) => p.get(key as usize).copied().unwrap_or(0.0),
        }
    }

    #[inline]
    fn seat_weights(&mut self, id: NodeId, key: u32) -> SeatWeights {
        let node = &self.nodes[id.0 as usize];
        let lvl = node.level.0 as usize;
        let PypParams {
            discount,
            concentration,
        } = self.levels[lvl].params;
        let cache = &mut self.caches[self.level_cache[lvl]];
        let Tally { customers, tables } = node.counts.get(key);
        let (c, t) = (customers as usize, tables as usize);
        let (join, open) = if node.kind == NodeKind::Gem {
            if t == 0 {
                (0.0, concentration + discount * node.tables as f64)
            } else {
                (cache.join_ratio(c, t), 0.0)
            }
        } else {
            let (cf, tf) = (c as f64, t as f64);
            let join = if t == 0 {
                0.0
            } else {
                cache.join_ratio(c, t) * (cf - tf + 1.0) / (cf + 1.0)
            };
            let open = (concentration + discount * node.tables as f64)
                * cache.open_ratio(c, t)
                * (tf + 1.0)
                / (cf + 1.0);
            (join, open)
        };
        SeatWeights {
            join,
            open,
            denom: concentration + node.customers as f64,
        }
    }

    fn chain(&self, id: NodeId, out: &mut [NodeId; MAX_CHAIN]) -> usize {
        let mut len = 0;
        let mut cur = Some(id);
        while let Some(n) = cur {
            out[len] = n;
            len += 1;
            cur = self.nodes[n.0 as usize].parent;
        }
        len
    }

    /// Predictive probability that the next customer at `id` has key `key`,
    /// marginalizing over every table choice up the chain.
    pub fn predictive(&mut self, id: NodeId, key: u32) -> f64 {
        let mut ids = [NodeId(0); MAX_CHAIN];
        let len = self.chain(id, &mut ids);
        let mut p = self.base_prob(key);
        for i in (0..len).rev() {
            let w = self.seat_weights(ids[i], key);
            p = (w.join + w.open * p) / w.denom;
        }
        p
    }

    fn bump(&mut self, id: NodeId, key: u32, new_table: bool) {
        let node = &mut self.nodes[id.0 as usize];
        let tally = node.counts.get_mut(key);
        tally.customers += 1;
        node.customers += 1;
        if new_table {
            tally.tables += 1;
            node.tables += 1;
        }
    }

    fn drop_one(&mut self, id: NodeId, key: u32, close_table: bool) {
        let node = &mut self.nodes[id.0 as usize];
        let tally = node.counts.get_mut(key);
        tally.customers -= 1;
        node.customers -= 1;
        if close_table {
            tally.tables -= 1;
            node.tables -= 1;
        }
        node.counts.prune(key);
    }

    /// Seat a customer at `id`, sampling the indicator chain from its exact
    /// conditional given the key.
    pub fn add_customer<R: Rng + ?Sized>(
        &mut self,
        id: NodeId,
        key: u32,
        rng: &mut R,
    ) -> Result<IndicatorOutcome, PypError> {
        let mut ids = [NodeId(0); MAX_CHAIN];
        let len = self.chain(id, &mut ids);
        let mut weights = [SeatWeights {
            join: 0.0,
            open: 0.0,
            denom: 1.0,
        }; MAX_CHAIN];
        // parent_pred[i] = predictive of the node above ids[i]
        let mut parent_pred = [0.0; MAX_CHAIN];
        let mut p = self.base_prob(key);
        for i in (0..len).rev() {
            let w = self.seat_weights(ids[i], key);
            weights[i] = w;
            parent_pred[i] = p;
            p = (w.join + w.open * p) / w.denom;
        }
        let mut opened = 0;
        for i in 0..len {
            let w = weights[i];
            let open = w.open * parent_pred[i];
            let total = w.join + open;
            if !(total > 0.0) || !total.is_finite() {
                return Err(PypError::Unseatable { node: ids[i], key });
            }
            let new_table = if w.join == 0.0 {
                true
            } else if open == 0.0 {
                false
            } else {
                rng.gen::<f64>() * total < open
            };
            self.bump(ids[i], key, new_table);
            if !new_table {
                break;
            }
            opened += 1;
        }
        Ok(IndicatorOutcome {
            opened,
            chain_len: len,
        })
    }

    /// Seat a customer with a prescribed number of table openings.
    pub fn add_customer_forced(
        &mut self,
        id: NodeId,
        key: u32,
        opened: usize,
    ) -> Result<IndicatorOutcome, PypError> {
        let mut ids = [NodeId(0); MAX_CHAIN];
        let len = self.chain(id, &mut ids);
        if opened > len {
            return Err(PypError::InvalidIndicators { node: id, depth: opened });
        }
        for (i, &n) in ids[..len].iter().enumerate() {
            let t = self.nodes[n.0 as usize].counts.get(key);
            let new_table = i < opened;
            let gem = self.nodes[n.0 as usize].kind == NodeKind::Gem;
            if (!new_table && t.tables == 0) || (new_table && gem && t.tables > 0) {
                return Err(PypError::InvalidIndicators { node: n, depth: opened });
            }
            self.bump(n, key, new_table);
            if !new_table {
                break;
            }
        }
        Ok(IndicatorOutcome {
            opened,
            chain_len: len,
        })
    }

    /// Remove one customer at `id`, drawing its indicator chain from the
    /// counts: at a PYP node the customer opened its table with probability
    /// `t/c`, and a GEM table closes with its last customer.
    ///
    /// Returns `None`, leaving the counts untouched, when the drawn chain
    /// would strand customers without a table; the customer then stays put.
    pub fn remove_customer<R: Rng + ?Sized>(
        &mut self,
        id: NodeId,
        key: u32,
        rng: &mut R,
    ) -> Result<Option<IndicatorOutcome>, PypError> {
        let mut cur = Some(id);
        let mut closed = 0;
        while let Some(n) = cur {
            let node = &self.nodes[n.0 as usize];
            let Tally { customers, tables } = node.counts.get(key);
            if customers == 0 {
                return Err(PypError::Underflow { node: n, key });
            }
            let close = if customers == tables {
                true
            } else if node.kind == NodeKind::Gem {
                false
            } else {
                rng.gen::<f64>() * (customers as f64) < tables as f64
            };
            if !close {
                break;
            }
            if tables == 1 && customers > 1 {
                return Ok(None);
            }
            closed += 1;
            cur = node.parent;
        }
        self.remove_customer_forced(id, key, closed)?;
        let mut ids = [NodeId(0); MAX_CHAIN];
        let chain_len = self.chain(id, &mut ids);
        Ok(Some(IndicatorOutcome {
            opened: closed,
            chain_len,
        }))
    }

    /// Inverse of [`Hierarchy::add_customer_forced`].
    pub fn remove_customer_forced(
        &mut self,
        id: NodeId,
        key: u32,
        closed: usize,
    ) -> Result<(), PypError> {
        let mut cur = Some(id);
        let mut depth = 0;
        while let Some(n) = cur {
            let t = self.nodes[n.0 as usize].counts.get(key);
            let close = depth < closed;
            if t.customers == 0 {
                return Err(PypError::Underflow { node: n, key });
            }
            let remaining_c = t.customers - 1;
            let remaining_t = t.tables - close as u32;
            if (close && t.tables == 0)
                || remaining_t > remaining_c
                || (remaining_c > 0 && remaining_t == 0)
            {
                return Err(PypError::InvalidIndicators { node: n, depth: closed });
            }
            self.drop_one(n, key, close);
            if !close {
                break;
            }
            depth += 1;
            cur = self.nodes[n.0 as usize].parent;
        }
        Ok(())
    }

    /// Joint probability of key `key` and each indicator outcome for the
    /// next customer at `id`; entry `m` is the outcome with `m` openings.
    pub fn outcome_probabilities(&mut self, id: NodeId, key: u32) -> Vec<f64> {
        let mut ids = [NodeId(0); MAX_CHAIN];
        let len = self.chain(id, &mut ids);
        let mut out = Vec::with_capacity(len + 1);
        let mut prefix = 1.0;
        for &n in &ids[..len] {
            let w = self.seat_weights(n, key);
            out.push(prefix * w.join / w.denom);
            prefix *= w.open / w.denom;
            if prefix == 0.0 {
                break;
            }
        }
        if out.len() == len {
            out.push(prefix * self.base_prob(key));
        }
        out
    }

    /// Probability that the next two customers, at `a` and then at `b`, both
    /// take key `key`, marginalizing the first customer's seating.
    pub fn pair_predictive(&mut self, a: NodeId, b: NodeId, key: u32) -> Result<f64, PypError> {
        let outcomes = self.outcome_probabilities(a, key);
        let mut total = 0.0;
        for (m, &p) in outcomes.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            self.add_customer_forced(a, key, m)?;
            total += p * self.predictive(b, key);
            self.remove_customer_forced(a, key, m)?;
        }
        Ok(total)
    }

    /// `log f(N)`.
    pub fn log_marginal(&mut self, id: NodeId) -> f64 {
        let node = &self.nodes[id.0 as usize];
        let lvl = node.level.0 as usize;
        let PypParams {
            discount,
            concentration,
        } = self.levels[lvl].params;
        let cache = &mut self.caches[self.level_cache[lvl]];
        let mut acc = log_pochhammer(concentration, discount, node.tables as usize)
            .expect("positive concentration")
            - log_pochhammer(concentration, 1.0, node.customers as usize)
                .expect("positive concentration");
        for (_, t) in node.counts.iter() {
            acc += cache.log_unchecked(t.customers as usize, t.tables as usize);
        }
        acc
    }

    /// Contribution of the base measure: `Σ_roots Σ_k t_k log H_k`.
    pub fn log_base_term(&self) -> f64 {
        let mut acc = 0.0;
        for node in self.nodes.iter().filter(|n| n.parent.is_none()) {
            match &self.base {
                BaseMeasure::NewLabel => {}
                BaseMeasure::Uniform { size } => {
                    acc -= node.tables as f64 * (*size as f64).ln();
                }
                BaseMeasure::Fixed(p) => {
                    for (k, t) in node.counts.iter() {
                        if t.tables > 0 {
                            acc += t.tables as f64 * p[k as usize].ln();
                        }
                    }
                }
            }
        }
        acc
    }

    /// Joint log likelihood of all table configurations in the arena.
    pub fn log_likelihood(&mut self) -> f64 {
        let mut acc = self.log_base_term();
        for i in 0..self.nodes.len() {
            acc += self.log_marginal(NodeId(i as u32));
        }
        acc
    }

    /// Probability vector over keys `0..len` recovered from the counts of a
    /// node given its parent's vector.
    pub fn estimate_with_parent(&self, id: NodeId, parent: &[f64]) -> Vec<f64> {
        let node = self.node(id);
        let PypParams {
            discount,
            concentration,
        } = self.node_params(id);
        let denom = concentration + node.customers as f64;
        let mass = discount * node.tables as f64 + concentration;
        let mut out: Vec<f64> = parent.iter().map(|p| mass * p / denom).collect();
        for (k, t) in node.counts.iter() {
            if let Some(slot) = out.get_mut(k as usize) {
                *slot += (t.customers as f64 - discount * t.tables as f64) / denom;
            }
        }
        out
    }

    /// The base vector seen by a root node over keys `0..len`.
    ///
    /// For a GEM root the remainder mass goes to unused keys uniformly; when
    /// every key is in use it is spread proportionally over the used keys.
    pub fn base_vector(&self, root: NodeId, len: usize) -> Vec<f64> {
        match &self.base {
            BaseMeasure::Uniform { size } => vec![1.0 / *size as f64; len],
            BaseMeasure::Fixed(p) => {
                let mut v = p.clone();
                v.resize(len, 0.0);
                v
            }
            BaseMeasure::NewLabel => {
                let node = self.node(root);
                let unused = (0..len as u32)
                    .filter(|&k| node.counts.get(k).customers == 0)
                    .count();
                if unused > 0 {
                    (0..len as u32)
                        .map(|k| {
                            if node.counts.get(k).customers == 0 {
                                1.0 / unused as f64
                            } else {
                                0.0
                            }
                        })
                        .collect()
                } else {
                    let discount = self.node_params(root).discount;
                    let norm = node.customers as f64 - discount * node.tables as f64;
                    (0..len as u32)
                        .map(|k| {
                            let t = node.counts.get(k);
                            (t.customers as f64 - discount * t.tables as f64) / norm
                        })
                        .collect()
                }
            }
        }
    }

    /// Recover a node's probability vector, recursing through its ancestors.
    pub fn estimate(&self, id: NodeId, len: usize) -> Vec<f64> {
        let parent = match self.node(id).parent {
            Some(p) => self.estimate(p, len),
            None => self.base_vector(id, len),
        };
        self.estimate_with_parent(id, &parent)
    }

    /// Check per-node count invariants and parent/child table consistency.
    pub fn consistency_check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut child_tables: Vec<std::collections::BTreeMap<u32, u64>> =
            vec![Default::default(); self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let id = NodeId(i as u32);
            let mut c_sum = 0u64;
            let mut t_sum = 0u64;
            for (k, t) in node.counts.iter() {
                c_sum += t.customers as u64;
                t_sum += t.tables as u64;
                if t.tables > t.customers {
                    out.push(Violation {
                        node: id,
                        key: Some(k),
                        message: format!("tables {} exceed customers {}", t.tables, t.customers),
                    });
                }
                if t.customers > 0 && t.tables == 0 {
                    out.push(Violation {
                        node: id,
                        key: Some(k),
                        message: format!("{} customers but no table", t.customers),
                    });
                }
                if node.kind == NodeKind::Gem && t.tables > 1 {
                    out.push(Violation {
                        node: id,
                        key: Some(k),
                        message: format!("GEM node with {} tables", t.tables),
                    });
                }
                if let Some(p) = node.parent {
                    if t.tables > 0 {
                        *child_tables[p.0 as usize].entry(k).or_default() += t.tables as u64;
                    }
                }
            }
            if c_sum != node.customers || t_sum != node.tables {
                out.push(Violation {
                    node: id,
                    key: None,
                    message: format!(
                        "totals C={} T={} but counts sum to C={} T={}",
                        node.customers, node.tables, c_sum, t_sum
                    ),
                });
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let id = NodeId(i as u32);
            let from_children = &child_tables[i];
            let mut keys: Vec<u32> = node.counts.iter().map(|(k, _)| k).collect();
            keys.extend(from_children.keys().copied());
            keys.sort_unstable();
            keys.dedup();
            for k in keys {
                let c = node.counts.get(k).customers as u64;
                let inherited = from_children.get(&k).copied().unwrap_or(0);
                let bad = if node.open {
                    c < inherited
                } else {
                    c != inherited
                };
                if bad {
                    out.push(Violation {
                        node: id,
                        key: Some(k),
                        message: format!(
                            "{} customers but children hold {} tables",
                            c, inherited
                        ),
                    });
                }
            }
        }
        out
    }

    /// Resample the concentration shared by every node of `level` with the
    /// auxiliary-variable scheme: `1-ξ ~ Beta(β, C)`,
    /// `ψ_j ~ Bernoulli(β / (β + jα))` for `j < T`, then
    /// `β' ~ Gamma(τ₀ + Σψ, τ₁ − Σ log(1−ξ))`.
    pub fn sample_concentration<R: Rng + ?Sized>(
        &mut self,
        level: LevelId,
        shape: f64,
        rate: f64,
        rng: &mut R,
    ) -> f64 {
        let PypParams {
            discount,
            concentration,
        } = self.params(level);
        let mut psi_sum = 0.0;
        let mut log_sum = 0.0;
        for &id in &self.level_nodes[level.0 as usize] {
            let node = &self.nodes[id.0 as usize];
            if node.customers == 0 {
                continue;
            }
            let one_minus_xi = Beta::new(concentration, node.customers as f64)
                .expect("positive Beta parameters")
                .sample(rng)
                .max(f64::MIN_POSITIVE);
            log_sum -= one_minus_xi.ln();
            for j in 0..node.tables {
                let p = concentration / (concentration + j as f64 * discount);
                if rng.gen::<f64>() < p {
                    psi_sum += 1.0;
                }
            }
        }
        let gamma = Gamma::new(shape + psi_sum, 1.0 / (rate + log_sum))
            .expect("positive Gamma parameters");
        let beta = gamma.sample(rng).max(f64::MIN_POSITIVE);
        self.set_concentration(level, beta);
        beta
    }

    #[cfg(test)]
    pub(crate) fn corrupt(&mut self, id: NodeId, key: u32, tally: Tally) {
        self.nodes[id.0 as usize].counts.corrupt(key, tally);
    }
}
