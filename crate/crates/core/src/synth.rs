//! Synthetic labeled transaction graphs with planted Ponzi behavior.
//!
//! Both classes draw investor counts, amounts, payout counts and active
//! windows from the same distributions, and either class may serve as the
//! other's relay, so manual features overlap. What differs is timing:
//!
//! * Ponzi contracts fund each payout from the investment that just arrived:
//!   an earlier investor is paid shortly afterwards, at `payback_ratio` of
//!   the principal, and the owner sweeps the withheld margin at the end.
//!   A `p2_fraction` share of payouts is relayed through a fixed second
//!   contract, called right before the relay pays out.
//! * Normal contracts pay at times unrelated to their users' calls. Relayed
//!   payouts are pre-funded: the contract calls its relay when it opens, and
//!   the relay pays users later. A `self_call_rate_normal` share of payouts
//!   runs through a self-call first.
//!
//! Noise transfers and incidental contract-to-contract calls are layered on
//! top. All randomness flows from one seeded ChaCha8 stream.

use std::collections::HashSet;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_store::{EdgeKind, GraphBuilder, HeterogeneousGraph, LabelSet, NodeId, NodeType};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_ponzi_ca: usize,
    pub n_normal_ca: usize,
    pub n_eoa: usize,
    /// Mean number of distinct investors per contract.
    pub investors_per_ca: f64,
    /// Chance that an investment (Ponzi) or call (normal) triggers a payout.
    pub reward_probability: f64,
    /// Payout as a share of the principal it repays, for Ponzi contracts.
    /// Normal contracts pay back at ratio 1.
    pub payback_ratio: f64,
    /// Share of payouts relayed through a second contract.
    pub p2_fraction: f64,
    /// Per-call chance that a normal contract runs a self-call chain.
    pub self_call_rate_normal: f64,
    /// Random call+transfer pairs and payouts per contract.
    pub noise_edges_per_ca: f64,
    /// Incidental calls from each contract to random other contracts.
    pub noise_calls_per_ca: f64,
    /// Timestamps fall in `[start_time, start_time + time_horizon)`.
    pub time_horizon: u64,
    pub start_time: u64,
    /// Log-normal amount parameters (natural-log scale, in wei).
    pub amount_log_mean: f64,
    pub amount_log_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_ponzi_ca: 100,
            n_normal_ca: 100,
            n_eoa: 5000,
            investors_per_ca: 20.0,
            reward_probability: 0.7,
            payback_ratio: 0.8,
            p2_fraction: 0.3,
            self_call_rate_normal: 0.1,
            noise_edges_per_ca: 10.0,
            noise_calls_per_ca: 5.0,
            time_horizon: 10_000_000,
            start_time: 1_500_000_000,
            amount_log_mean: 41.4, // ≈ 1 ether
            amount_log_sd: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("reward_probability", self.reward_probability)?;
        unit("p2_fraction", self.p2_fraction)?;
        unit("self_call_rate_normal", self.self_call_rate_normal)?;
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("investors_per_ca", self.investors_per_ca)?;
        nonneg("payback_ratio", self.payback_ratio)?;
        nonneg("noise_edges_per_ca", self.noise_edges_per_ca)?;
        nonneg("noise_calls_per_ca", self.noise_calls_per_ca)?;
        if !(self.amount_log_sd.is_finite() && self.amount_log_sd >= 0.0 && self.amount_log_mean.is_finite()) {
            return Err(SynthError::InvalidConfig("amount distribution parameters must be finite".into()));
        }
        if self.time_horizon < 100 {
            return Err(SynthError::InvalidConfig("time_horizon must be at least 100".into()));
        }
        if self.n_ponzi_ca + self.n_normal_ca > 0 && self.n_eoa < 2 {
            return Err(SynthError::InvalidConfig("contracts need at least 2 EOAs".into()));
        }
        Ok(())
    }
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    amount: LogNormal<f64>,
    edges: Vec<(NodeId, NodeId, EdgeKind, u64, u128)>,
}

impl Gen<'_> {
    fn time(&mut self, lo: f64, hi: f64) -> u64 {
        let h = self.cfg.time_horizon as f64;
        let t = self.rng.random_range(lo * h..hi * h).floor() as u64;
        t.min(self.cfg.time_horizon - 1)
    }

    fn amount(&mut self) -> f64 {
        self.amount.sample(&mut self.rng)
    }

    fn push(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind, t: u64, value: f64) {
        let value = if kind == EdgeKind::Call { 0 } else { value.max(0.0).round() as u128 };
        self.edges.push((src, dst, kind, self.cfg.start_time + t, value));
    }

    /// Investors skew toward low EOA indices, so popular EOAs invest in many
    /// contracts.
    fn investors(&mut self, eoas: &[NodeId]) -> Vec<NodeId> {
        let mean = self.cfg.investors_per_ca;
        let n = (self.rng.random_range(0.5 * mean..=1.5 * mean).round() as usize).clamp(1, eoas.len());
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u: f64 = self.rng.random();
            let i = ((eoas.len() as f64) * u * u) as usize;
            if seen.insert(i) {
                out.push(eoas[i.min(eoas.len() - 1)]);
            }
        }
        out
    }
}

fn account_id(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let mut bytes = [0u8; 20];
        rng.fill_bytes(&mut bytes);
        let id: String = std::iter::once("0x".to_string()).chain(bytes.iter().map(|b| format!("{b:02x}"))).collect();
        if used.insert(id.clone()) {
            return id;
        }
    }
}

/// Builds a graph and its Ponzi labels from `cfg`. Identical configs give
/// identical graphs (same ids, same edge order).
pub fn generate(cfg: &SynthConfig) -> Result<(HeterogeneousGraph, LabelSet), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = HashSet::new();
    let mut builder = GraphBuilder::new();
    let mut labels = LabelSet::new(format!("synthetic(seed={})", cfg.seed));

    let eoas: Vec<NodeId> = (0..cfg.n_eoa)
        .map(|_| {
            let id = account_id(&mut rng, &mut used);
            builder.add_node(&id, NodeType::Eoa).expect("fresh id")
        })
        .collect();
    // interleave the two contract classes in id order
    let n_ca = cfg.n_ponzi_ca + cfg.n_normal_ca;
    let ponzi_slots: HashSet<usize> = index::sample(&mut rng, n_ca, cfg.n_ponzi_ca).into_iter().collect();
    let mut ponzi = Vec::new();
    let mut normal = Vec::new();
    for slot in 0..n_ca {
        let id = account_id(&mut rng, &mut used);
        let node = builder.add_node(&id, NodeType::Ca).expect("fresh id");
        if ponzi_slots.contains(&slot) {
            labels.ponzi_accounts.insert(id);
            ponzi.push(node);
        } else {
            normal.push(node);
        }
    }
    let relays: Vec<NodeId> = ponzi.iter().chain(&normal).copied().collect();

    let amount = LogNormal::new(cfg.amount_log_mean, cfg.amount_log_sd)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let mut gen = Gen { cfg, rng, amount, edges: Vec::new() };

    for &c in &ponzi {
        plant_ponzi(&mut gen, c, &eoas, &relays);
    }
    for &c in &normal {
        plant_normal(&mut gen, c, &eoas, &relays);
    }
    plant_noise(&mut gen, &eoas, &ponzi, &normal);

    let mut edges = std::mem::take(&mut gen.edges);
    edges.sort_by_key(|&(s, d, k, t, v)| (t, s, d, k, v));
    for (s, d, k, t, v) in edges {
        builder.add_edge(s, d, k, t, v);
    }
    Ok((builder.build(), labels))
}

/// Invest: a call plus the value transfer riding on it.
fn invest(gen: &mut Gen, investor: NodeId, c: NodeId, t: u64) -> f64 {
    let v = gen.amount();
    gen.push(investor, c, EdgeKind::Call, t, 0.0);
    gen.push(investor, c, EdgeKind::Trans, t, v);
    v
}

/// Pays `to` from `c`, either directly or through `relay` (call with value,
/// then a transfer from the relay a moment later).
fn pay(gen: &mut Gen, c: NodeId, to: NodeId, t: u64, v: f64, relay: Option<NodeId>, relay_delay: u64) {
    match relay {
        None => gen.push(c, to, EdgeKind::Trans, t, v),
        Some(r) => {
            gen.push(c, r, EdgeKind::Call, t, 0.0);
            gen.push(c, r, EdgeKind::Trans, t, v);
            gen.push(r, to, EdgeKind::Trans, t + relay_delay, v);
        }
    }
}

/// Each contract routes its relayed payouts through one other contract,
/// drawn uniformly so both classes act as relays equally often.
fn preferred_relay(gen: &mut Gen, c: NodeId, relays: &[NodeId]) -> Option<NodeId> {
    if relays.len() < 2 {
        return None;
    }
    loop {
        let r = *relays.choose(&mut gen.rng).expect("non-empty");
        if r != c {
            return Some(r);
        }
    }
}

fn use_relay(gen: &mut Gen, relay: Option<NodeId>) -> Option<NodeId> {
    relay.filter(|_| gen.rng.random_bool(gen.cfg.p2_fraction))
}

/// Active period of one contract, as fractions of the horizon. Both classes
/// draw from the same distribution so lifecycles overlap.
fn window(gen: &mut Gen) -> (f64, f64) {
    let start = gen.rng.random_range(0.0..0.3);
    let len = gen.rng.random_range(0.5..0.7);
    (start, (start + len).min(1.0))
}

fn plant_ponzi(gen: &mut Gen, c: NodeId, eoas: &[NodeId], relays: &[NodeId]) {
    let (lo, hi) = window(gen);
    let relay = preferred_relay(gen, c, relays);
    let owner = eoas[gen.rng.random_range(0..eoas.len())];
    let investors = gen.investors(eoas);
    let short = (gen.cfg.time_horizon / 200).max(2);

    // (time, investor, principal), owner seeds the scheme first
    let t0 = gen.time(lo, lo + 0.01);
    let v0 = invest(gen, owner, c, t0);
    let mut book = vec![(t0, owner, v0)];
    for &e in &investors {
        let rounds = gen.rng.random_range(1..=3);
        for _ in 0..rounds {
            let t = gen.time(lo + 0.01, hi);
            let v = invest(gen, e, c, t);
            book.push((t, e, v));
        }
    }
    book.sort_by_key(|&(t, e, _)| (t, e));

    // each new investment funds a payout to an earlier investor
    let mut margin = 0.0;
    for j in 1..book.len() {
        if !gen.rng.random_bool(gen.cfg.reward_probability) {
            continue;
        }
        let (tj, _, _) = book[j];
        let (ti, earlier, principal) = book[gen.rng.random_range(0..j)];
        if ti >= tj {
            continue;
        }
        let t = tj + gen.rng.random_range(1..short);
        let full = principal * gen.rng.random_range(0.8..1.2);
        margin += full * (1.0 - gen.cfg.payback_ratio);
        let via = use_relay(gen, relay);
        let delay = gen.rng.random_range(1..short);
        pay(gen, c, earlier, t, full * gen.cfg.payback_ratio, via, delay);
    }

    // the owner sweeps the withheld margin late in the scheme's life
    let sweeps = gen.rng.random_range(1..=3);
    for _ in 0..sweeps {
        let t = gen.time(hi - 0.05, hi);
        gen.push(c, owner, EdgeKind::Trans, t, margin / sweeps as f64);
    }
}

fn plant_normal(gen: &mut Gen, c: NodeId, eoas: &[NodeId], relays: &[NodeId]) {
    let (lo, hi) = window(gen);
    let relay = preferred_relay(gen, c, relays);
    let users = gen.investors(eoas);
    let mut book = Vec::new();
    for &e in &users {
        let rounds = gen.rng.random_range(1..=3);
        for _ in 0..rounds {
            let t = gen.time(lo, hi);
            let v = invest(gen, e, c, t);
            book.push((e, v));
        }
    }
    // payouts at times unrelated to the payee's own calls
    for _ in 0..book.len() {
        if !gen.rng.random_bool(gen.cfg.reward_probability) {
            continue;
        }
        let (e, principal) = book[gen.rng.random_range(0..book.len())];
        let v = principal * gen.rng.random_range(0.8..1.2);
        let t = gen.time(lo, hi);
        if gen.rng.random_bool(gen.cfg.self_call_rate_normal) {
            // self-call chain: c calls itself, then pays out
            let t2 = gen.time(lo, hi);
            gen.push(c, c, EdgeKind::Call, t2.min(t), 0.0);
            gen.push(c, e, EdgeKind::Trans, t.max(t2), v);
        } else {
            match use_relay(gen, relay) {
                None => gen.push(c, e, EdgeKind::Trans, t, v),
                Some(r) => {
                    // normal contracts fund the relay from reserves when
                    // they open, not from later deposits
                    let t_settle = gen.time(lo, lo + 0.01);
                    gen.push(c, r, EdgeKind::Call, t_settle, 0.0);
                    gen.push(c, r, EdgeKind::Trans, t_settle, v);
                    gen.push(r, e, EdgeKind::Trans, t, v);
                }
            }
        }
    }
}

fn plant_noise(gen: &mut Gen, eoas: &[NodeId], ponzi: &[NodeId], normal: &[NodeId]) {
    let cas: Vec<NodeId> = ponzi.iter().chain(normal).copied().collect();
    if cas.is_empty() || eoas.is_empty() {
        return;
    }
    let total = (gen.cfg.noise_edges_per_ca * cas.len() as f64).round() as usize;
    for _ in 0..total {
        let c = cas[gen.rng.random_range(0..cas.len())];
        let e = eoas[gen.rng.random_range(0..eoas.len())];
        let t = gen.time(0.0, 1.0);
        let v = gen.amount();
        if gen.rng.random_bool(0.5) {
            gen.push(e, c, EdgeKind::Call, t, 0.0);
            gen.push(e, c, EdgeKind::Trans, t, v);
        } else {
            gen.push(c, e, EdgeKind::Trans, t, v);
        }
    }
    if cas.len() < 2 {
        return;
    }
    let calls = (gen.cfg.noise_calls_per_ca * cas.len() as f64).round() as usize;
    for _ in 0..calls {
        let c = cas[gen.rng.random_range(0..cas.len())];
        let r = cas[gen.rng.random_range(0..cas.len())];
        if r != c {
            let t = gen.time(0.0, 1.0);
            gen.push(c, r, EdgeKind::Call, t, 0.0);
        }
    }
}
