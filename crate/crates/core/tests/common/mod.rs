#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tmfaug::graph_store::{EdgeKind, GraphBuilder, HeterogeneousGraph, NodeType};
use tmfaug::metapath::{Pattern, SuperMetapath};

/// (src index, dst index, is_call, timestamp, value)
pub type EdgeSpec = (usize, usize, bool, u64, u128);

/// Nodes `e0..` are EOAs and `c0..` contracts; edge endpoints index the
/// concatenated list modulo its length.
pub fn build(n_eoa: usize, n_ca: usize, edges: &[EdgeSpec]) -> HeterogeneousGraph {
    let mut b = GraphBuilder::new();
    let mut ids = Vec::new();
    for i in 0..n_eoa {
        ids.push(b.add_node(&format!("e{i}"), NodeType::Eoa).unwrap());
    }
    for i in 0..n_ca {
        ids.push(b.add_node(&format!("c{i}"), NodeType::Ca).unwrap());
    }
    let n = ids.len();
    for &(s, d, call, t, v) in edges {
        let kind = if call { EdgeKind::Call } else { EdgeKind::Trans };
        b.add_edge(ids[s % n], ids[d % n], kind, t, v);
    }
    b.build()
}

/// Small mixed-type graphs with many repeated timestamps.
pub fn arb_graph(max_edges: usize) -> impl Strategy<Value = HeterogeneousGraph> {
    (1usize..5, 1usize..4, prop::collection::vec((0usize..16, 0usize..16, any::<bool>(), 0u64..8, 0u128..20), 0..=max_edges))
        .prop_map(|(ne, nc, edges)| build(ne, nc, &edges))
}

pub fn random_graph(rng: &mut ChaCha8Rng, max_edges: usize) -> HeterogeneousGraph {
    let ne = rng.random_range(1..5);
    let nc = rng.random_range(1..4);
    let n = ne + nc;
    let m = rng.random_range(0..=max_edges);
    let edges: Vec<EdgeSpec> = (0..m)
        .map(|_| {
            (
                rng.random_range(0..n),
                rng.random_range(0..n),
                rng.random_bool(0.5),
                rng.random_range(0..8),
                rng.random_range(0..20),
            )
        })
        .collect();
    build(ne, nc, &edges)
}

pub fn as_map(supers: &[SuperMetapath]) -> BTreeMap<(Pattern, Vec<u32>), u64> {
    supers.iter().map(|s| ((s.pattern(), s.node_sequence().to_vec()), s.omega())).collect()
}
