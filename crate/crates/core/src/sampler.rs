//! Inference: blocked Gibbs over word topics, Metropolis-Hastings over citing
//! topics, and hyperparameter updates.
//!
//! One iteration runs, in order: a word sweep; once the network is active, a
//! citing-topic sweep (the first active iteration seats every edge from the
//! proposal instead) followed by λ updates; then every level's
//! concentration.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::model::{network_sums, ModelError, ModelState};
use crate::pyp::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    pub iteration: usize,
    pub log_joint: f64,
    pub k_active: usize,
    /// Present only when a citing-topic sweep ran.
    pub acceptance_rate: Option<f64>,
    /// Proposals that fell back to uniform because every weight was zero.
    pub proposal_fallbacks: usize,
    pub concentrations: Vec<(String, f64)>,
    pub seconds: f64,
}

impl SweepStats {
    /// One `key=value` line; wall-clock time is left out so that logs of
    /// identical runs are identical.
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "iter={} log_joint={:?} k_active={}",
            self.iteration, self.log_joint, self.k_active
        );
        if let Some(a) = self.acceptance_rate {
            write!(s, " acceptance_rate={a:?}").unwrap();
        }
        if self.proposal_fallbacks > 0 {
            write!(s, " proposal_fallbacks={}", self.proposal_fallbacks).unwrap();
        }
        for (name, beta) in &self.concentrations {
            write!(s, " beta.{name}={beta:?}").unwrap();
        }
        s
    }

    pub fn parse_line(line: &str) -> Option<SweepStats> {
        let mut stats = SweepStats {
            iteration: 0,
            log_joint: 0.0,
            k_active: 0,
            acceptance_rate: None,
            proposal_fallbacks: 0,
            concentrations: Vec::new(),
            seconds: 0.0,
        };
        let mut seen_iter = false;
        for field in line.split_whitespace() {
            let (key, value) = field.split_once('=')?;
            match key {
                "iter" => {
                    stats.iteration = value.parse().ok()?;
                    seen_iter = true;
                }
                "log_joint" => stats.log_joint = value.parse().ok()?,
                "k_active" => stats.k_active = value.parse().ok()?,
                "acceptance_rate" => stats.acceptance_rate = Some(value.parse().ok()?),
                "proposal_fallbacks" => stats.proposal_fallbacks = value.parse().ok()?,
                _ => {
                    let name = key.strip_prefix("beta.")?;
                    stats.concentrations.push((name.to_string(), value.parse().ok()?));
                }
            }
        }
        seen_iter.then_some(stats)
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding: fall back to the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Topic slots a word may move to: every active slot, plus the lowest free
/// slot while the cap allows a new topic. With a fixed topic count, all slots.
pub fn candidate_topics(state: &ModelState) -> Vec<u32> {
    let cap = state.config.topic_cap as u32;
    if state.config.fixed_k {
        return (0..cap).collect();
    }
    let mut out: Vec<u32> = Vec::with_capacity(cap as usize);
    let mut fresh = None;
    for k in 0..cap {
        if state.is_topic_active(k) {
            out.push(k);
        } else if fresh.is_none() {
            fresh = Some(k);
        }
    }
    if let Some(k) = fresh {
        out.push(k);
    }
    out
}

/// Unnormalized conditional of `z_dn = k` for every candidate, given the
/// token has been removed: topic-side predictive at `θ_d` times word-side
/// predictive at `φ′_dk`, each marginalizing the indicator chain.
pub fn word_topic_weights(state: &mut ModelState, d: usize, w: u32) -> Vec<(u32, f64)> {
    let candidates = candidate_topics(state);
    let theta = state.theta[d];
    candidates
        .into_iter()
        .map(|k| {
            let pt = state.topics.predictive(theta, k);
            let pw = state.words.predictive(state.phi_prime_node(d, k), w);
            (k, pt * pw)
        })
        .collect()
}

/// Take token `n` of document `d` out of both hierarchies. Returns `false`,
/// with nothing changed, when its indicator chains pin it in place.
fn remove_token<R: Rng + ?Sized>(
    state: &mut ModelState,
    d: usize,
    n: usize,
    rng: &mut R,
) -> Result<bool, ModelError> {
    let k = state.docs[d].z[n];
    let w = state.docs[d].tokens[n];
    let pp = state.phi_prime_node(d, k);
    let Some(word) = state.words.remove_customer(pp, w, rng)? else {
        return Ok(false);
    };
    if state.topics.remove_customer(state.theta[d], k, rng)?.is_none() {
        state.words.add_customer_forced(pp, w, word.opened)?;
        return Ok(false);
    }
    Ok(true)
}

/// Draw `z_dn` jointly with its indicator chains and seat the token. The
/// token must already be removed from both hierarchies.
pub fn sample_word_topic<R: Rng + ?Sized>(
    state: &mut ModelState,
    d: usize,
    n: usize,
    rng: &mut R,
) -> Result<u32, ModelError> {
    let w = state.docs[d].tokens[n];
    let weighted = word_topic_weights(state, d, w);
    let weights: Vec<f64> = weighted.iter().map(|&(_, p)| p).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(ModelError::Pyp(crate::pyp::PypError::Unseatable {
            node: state.theta[d],
            key: weighted.first().map(|&(k, _)| k).unwrap_or(0),
        }));
    }
    let k = weighted[sample_index(&weights, total, rng)].0;
    state.topics.add_customer(state.theta[d], k, rng)?;
    let pp = state.phi_prime_node(d, k);
    state.words.add_customer(pp, w, rng)?;
    state.docs[d].z[n] = k;
    Ok(k)
}

/// Resample every token's topic in corpus order.
pub fn gibbs_sweep_words<R: Rng + ?Sized>(
    state: &mut ModelState,
    rng: &mut R,
) -> Result<(), ModelError> {
    for d in 0..state.docs.len() {
        for n in 0..state.docs[d].tokens.len() {
            if remove_token(state, d, n, rng)? {
                sample_word_topic(state, d, n, rng)?;
            }
        }
    }
    Ok(())
}

/// `λ_ij = λ⁺_i λ⁻_j Σ_k λᵀ_k θ̂′_ik θ̂′_jk`.
pub fn poisson_rate(
    lambda_plus: f64,
    lambda_minus: f64,
    lambda_topic: &[f64],
    theta_i: &[f64],
    theta_j: &[f64],
) -> f64 {
    let s: f64 = lambda_topic
        .iter()
        .zip(theta_i)
        .zip(theta_j)
        .map(|((l, a), b)| l * a * b)
        .sum();
    lambda_plus * lambda_minus * s
}

/// `q(k) ∝ λᵀ_k θ̂′_ik θ̂′_jk`, normalized. The flag reports a fallback to
/// uniform when every weight vanishes.
pub fn proposal_distribution(lambda_topic: &[f64], theta_i: &[f64], theta_j: &[f64]) -> (Vec<f64>, bool) {
    let mut q: Vec<f64> = lambda_topic
        .iter()
        .zip(theta_i)
        .zip(theta_j)
        .map(|((l, a), b)| l * a * b)
        .collect();
    let total: f64 = q.iter().sum();
    if total > 0.0 && total.is_finite() {
        for x in &mut q {
            *x /= total;
        }
        (q, false)
    } else {
        let n = q.len() as f64;
        (vec![1.0 / n; q.len()], true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub topic: u32,
    pub q: Vec<f64>,
    pub fallback: bool,
}

fn theta_prime_ids(state: &ModelState, i: usize, j: usize) -> (NodeId, NodeId) {
    (state.theta_prime[i], state.theta_prime[j])
}

/// Draw a citing topic for edge `(i, j)` from `q`, with `θ̂′` taken from the
/// current counts (the edge's own customers already removed).
pub fn propose_citing_topic<R: Rng + ?Sized>(
    state: &ModelState,
    i: usize,
    j: usize,
    rng: &mut R,
) -> Proposal {
    let net = state.network.as_ref().expect("network variant");
    let ti = state.theta_prime_estimate(i);
    let tj = if i == j { ti.clone() } else { state.theta_prime_estimate(j) };
    let (q, fallback) = proposal_distribution(&net.lambda_topic, &ti, &tj);
    let topic = sample_index(&q, 1.0, rng) as u32;
    Proposal { topic, q, fallback }
}

/// Unnormalized target of `y_ij = k` given everything else: the predictive
/// of two network customers at `θ′_i` and `θ′_j`, times `λᵀ_k`. Free slots
/// under a GEM root share the new-topic mass equally. The exponential term is
/// evaluated at fixed `θ̂′` and so cancels.
pub fn citing_topic_target(state: &mut ModelState, i: usize, j: usize, k: u32) -> Result<f64, ModelError> {
    let (a, b) = theta_prime_ids(state, i, j);
    let mut p = state.topics.pair_predictive(a, b, k)?;
    if !state.config.fixed_k && !state.is_topic_active(k) {
        let free = state.topic_cap() - state.active_topics();
        p /= free as f64;
    }
    let lt = state.network.as_ref().expect("network variant").lambda_topic[k as usize];
    Ok(p * lt)
}

/// Accept `k_new` with probability `min(1, π(k_new) q(k_old) / (π(k_old) q(k_new)))`.
pub fn mh_accept_citing_topic<R: Rng + ?Sized>(
    state: &mut ModelState,
    i: usize,
    j: usize,
    k_new: u32,
    k_old: u32,
    q: &[f64],
    rng: &mut R,
) -> Result<bool, ModelError> {
    if k_new == k_old {
        return Ok(true);
    }
    let num = citing_topic_target(state, i, j, k_new)? * q[k_old as usize];
    let den = citing_topic_target(state, i, j, k_old)? * q[k_new as usize];
    let ratio = if den > 0.0 { num / den } else { f64::INFINITY };
    Ok(ratio >= 1.0 || rng.gen::<f64>() < ratio)
}

fn seat_edge<R: Rng + ?Sized>(
    state: &mut ModelState,
    e: usize,
    k: u32,
    rng: &mut R,
) -> Result<(), ModelError> {
    let cap = state.topic_cap();
    let (i, j) = state.network.as_ref().expect("network variant").edges[e];
    let (a, b) = theta_prime_ids(state, i as usize, j as usize);
    state.topics.add_customer(a, k, rng)?;
    state.topics.add_customer(b, k, rng)?;
    let net = state.network.as_mut().expect("network variant");
    net.y[e] = k;
    net.h[i as usize * cap + k as usize] += 1;
    net.h[j as usize * cap + k as usize] += 1;
    Ok(())
}

/// Take edge `e`'s two customers out of `θ′`. Returns `None`, with nothing
/// changed, when either is pinned by its indicator chain.
fn unseat_edge<R: Rng + ?Sized>(
    state: &mut ModelState,
    e: usize,
    rng: &mut R,
) -> Result<Option<u32>, ModelError> {
    let cap = state.topic_cap();
    let net = state.network.as_ref().expect("network variant");
    let (i, j) = net.edges[e];
    let k = net.y[e];
    let (a, b) = theta_prime_ids(state, i as usize, j as usize);
    let Some(second) = state.topics.remove_customer(b, k, rng)? else {
        return Ok(None);
    };
    if state.topics.remove_customer(a, k, rng)?.is_none() {
        state.topics.add_customer_forced(b, k, second.opened)?;
        return Ok(None);
    }
    let net = state.network.as_mut().expect("network variant");
    net.h[i as usize * cap + k as usize] -= 1;
    net.h[j as usize * cap + k as usize] -= 1;
    Ok(Some(k))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetworkSweep {
    pub proposals: usize,
    pub accepted: usize,
    pub fallbacks: usize,
}

impl NetworkSweep {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Seat every edge with a topic drawn from its proposal.
pub fn initialize_network<R: Rng + ?Sized>(
    state: &mut ModelState,
    rng: &mut R,
) -> Result<NetworkSweep, ModelError> {
    let mut stats = NetworkSweep::default();
    let Some(net) = &state.network else { return Ok(stats) };
    if net.initialized {
        return Ok(stats);
    }
    for e in 0..net.edges.len() {
        let (i, j) = state.network.as_ref().unwrap().edges[e];
        let p = propose_citing_topic(state, i as usize, j as usize, rng);
        stats.fallbacks += p.fallback as usize;
        seat_edge(state, e, p.topic, rng)?;
    }
    state.network.as_mut().unwrap().initialized = true;
    Ok(stats)
}

/// One decrement, propose, accept/reject and re-seat cycle per edge.
pub fn network_sweep<R: Rng + ?Sized>(
    state: &mut ModelState,
    rng: &mut R,
) -> Result<NetworkSweep, ModelError> {
    let mut stats = NetworkSweep::default();
    let Some(net) = &state.network else { return Ok(stats) };
    if !net.initialized {
        return initialize_network(state, rng);
    }
    for e in 0..net.edges.len() {
        let (i, j) = state.network.as_ref().unwrap().edges[e];
        let (i, j) = (i as usize, j as usize);
        let Some(k_old) = unseat_edge(state, e, rng)? else {
            continue;
        };
        let p = propose_citing_topic(state, i, j, rng);
        stats.proposals += 1;
        stats.fallbacks += p.fallback as usize;
        let accept = mh_accept_citing_topic(state, i, j, p.topic, k_old, &p.q, rng)?;
        let k = if accept {
            stats.accepted += 1;
            p.topic
        } else {
            k_old
        };
        seat_edge(state, e, k, rng)?;
    }
    Ok(stats)
}

/// Gamma `(shape, rate)` posterior of `λ⁺_i`.
pub fn lambda_plus_posterior(state: &ModelState, theta_prime: &[f64], i: usize) -> (f64, f64) {
    let net = state.network.as_ref().expect("network variant");
    let cap = state.topic_cap();
    let (_, b) = network_sums(net, theta_prime, cap);
    let row = &theta_prime[i * cap..(i + 1) * cap];
    let rate: f64 = (0..cap).map(|k| net.lambda_topic[k] * row[k] * b[k]).sum();
    (
        state.config.lambda_shape + net.out_degree[i] as f64,
        state.config.lambda_rate + rate,
    )
}

/// Gamma `(shape, rate)` posterior of `λ⁻_i`.
pub fn lambda_minus_posterior(state: &ModelState, theta_prime: &[f64], i: usize) -> (f64, f64) {
    let net = state.network.as_ref().expect("network variant");
    let cap = state.topic_cap();
    let (a, _) = network_sums(net, theta_prime, cap);
    let row = &theta_prime[i * cap..(i + 1) * cap];
    let rate: f64 = (0..cap).map(|k| net.lambda_topic[k] * row[k] * a[k]).sum();
    (
        state.config.lambda_shape + net.in_degree[i] as f64,
        state.config.lambda_rate + rate,
    )
}

/// Gamma `(shape, rate)` posterior of `λᵀ_k`, rate evaluated at the current `λᵀ_k`.
pub fn lambda_topic_posterior(state: &ModelState, theta_prime: &[f64], k: usize) -> (f64, f64) {
    let net = state.network.as_ref().expect("network variant");
    let cap = state.topic_cap();
    let (a, b) = network_sums(net, theta_prime, cap);
    let hk: u64 = (0..state.num_docs()).map(|i| net.h[i * cap + k] as u64).sum();
    (
        state.config.lambda_shape + 0.5 * hk as f64,
        state.config.lambda_rate + net.lambda_topic[k] * a[k] * b[k],
    )
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive Gamma parameters")
        .sample(rng)
        .max(f64::MIN_POSITIVE)
}

/// Draw every `λ⁺_i` from its posterior given `θ̂′` (row-major `docs × cap`).
pub fn sample_lambda_plus<R: Rng + ?Sized>(state: &mut ModelState, theta_prime: &[f64], rng: &mut R) {
    let cap = state.topic_cap();
    let (shape, rate0) = (state.config.lambda_shape, state.config.lambda_rate);
    let Some(net) = state.network.as_mut() else { return };
    let (_, b) = network_sums(net, theta_prime, cap);
    for (i, row) in theta_prime.chunks(cap).enumerate() {
        let r: f64 = (0..cap).map(|k| net.lambda_topic[k] * row[k] * b[k]).sum();
        net.lambda_plus[i] = gamma_draw(shape + net.out_degree[i] as f64, rate0 + r, rng);
    }
}

/// Draw every `λ⁻_i` from its posterior given `θ̂′`.
pub fn sample_lambda_minus<R: Rng + ?Sized>(state: &mut ModelState, theta_prime: &[f64], rng: &mut R) {
    let cap = state.topic_cap();
    let (shape, rate0) = (state.config.lambda_shape, state.config.lambda_rate);
    let Some(net) = state.network.as_mut() else { return };
    let (a, _) = network_sums(net, theta_prime, cap);
    for (i, row) in theta_prime.chunks(cap).enumerate() {
        let r: f64 = (0..cap).map(|k| net.lambda_topic[k] * row[k] * a[k]).sum();
        net.lambda_minus[i] = gamma_draw(shape + net.in_degree[i] as f64, rate0 + r, rng);
    }
}

/// Draw every `λᵀ_k` from its posterior, rate evaluated at the current value.
pub fn sample_lambda_topic<R: Rng + ?Sized>(state: &mut ModelState, theta_prime: &[f64], rng: &mut R) {
    let cap = state.topic_cap();
    let n = state.num_docs();
    let (shape, rate0) = (state.config.lambda_shape, state.config.lambda_rate);
    let Some(net) = state.network.as_mut() else { return };
    let (a, b) = network_sums(net, theta_prime, cap);
    for k in 0..cap {
        let hk: u64 = (0..n).map(|i| net.h[i * cap + k] as u64).sum();
        let r = net.lambda_topic[k] * a[k] * b[k];
        net.lambda_topic[k] = gamma_draw(shape + 0.5 * hk as f64, rate0 + r, rng);
    }
}

/// Update λ⁺, then λ⁻, then λᵀ, each given the latest values of the others.
pub fn sample_lambda<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) {
    if state.network.is_none() {
        return;
    }
    let tp = state.theta_prime_matrix();
    sample_lambda_plus(state, &tp, rng);
    sample_lambda_minus(state, &tp, rng);
    sample_lambda_topic(state, &tp, rng);
}

/// Resample the tied concentration of every level in both hierarchies.
pub fn sample_concentrations<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) {
    let (shape, rate) = (
        state.config.concentration_shape,
        state.config.concentration_rate,
    );
    for l in 0..state.topics.levels().len() {
        state
            .topics
            .sample_concentration(crate::pyp::LevelId(l as u16), shape, rate, rng);
    }
    for l in 0..state.words.levels().len() {
        state
            .words
            .sample_concentration(crate::pyp::LevelId(l as u16), shape, rate, rng);
    }
}

pub fn network_active(state: &ModelState) -> bool {
    state.variant().has_network() && state.iteration >= state.config.network_start
}

/// One full iteration using and advancing the state's own random stream.
pub fn step(state: &mut ModelState) -> Result<SweepStats, ModelError> {
    let start = Instant::now();
    let mut rng = state.rng.clone();
    let result = step_with(state, &mut rng);
    state.rng = rng;
    let mut stats = result?;
    stats.seconds = start.elapsed().as_secs_f64();
    Ok(stats)
}

fn step_with<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) -> Result<SweepStats, ModelError> {
    gibbs_sweep_words(state, rng)?;
    let mut acceptance_rate = None;
    let mut proposal_fallbacks = 0;
    if network_active(state) {
        let was_initialized = state.network.as_ref().is_some_and(|n| n.initialized);
        let sweep = network_sweep(state, rng)?;
        if was_initialized {
            acceptance_rate = Some(sweep.acceptance_rate());
        }
        proposal_fallbacks = sweep.fallbacks;
        if state.config.sample_hyperparameters {
            sample_lambda(state, rng);
        }
    }
    if state.config.sample_hyperparameters {
        sample_concentrations(state, rng);
    }
    let iteration = state.iteration;
    state.iteration += 1;
    Ok(SweepStats {
        iteration,
        log_joint: state.log_joint(),
        k_active: state.active_topics(),
        acceptance_rate,
        proposal_fallbacks,
        concentrations: state.concentrations(),
        seconds: 0.0,
    })
}

/// Run iterations until `config.iterations`, calling `on_iteration` after
/// each; returning `false` from it aborts training with the state intact.
pub fn train<F>(state: &mut ModelState, mut on_iteration: F) -> Result<Vec<SweepStats>, ModelError>
where
    F: FnMut(&ModelState, &SweepStats) -> bool,
{
    let mut out = Vec::new();
    while state.iteration < state.config.iterations {
        let stats = step(state)?;
        let keep_going = on_iteration(state, &stats);
        out.push(stats);
        if !keep_going {
            return Err(ModelError::Aborted(state.iteration));
        }
    }
    Ok(out)
}
