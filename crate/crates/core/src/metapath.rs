//! Super-metapath enumeration.
//!
//! Two patterns are supported:
//!
//! * `P1`: `EOA -call-> CA* -trans-> EOA`
//! * `P2`: `EOA -call-> CA* -call-> CA -trans-> EOA` (the second CA may be
//!   `CA*` itself, a contract self-call)
//!
//! All instances sharing a node sequence merge into one [`SuperMetapath`]
//! whose `omega` is the instance count. In time-aware mode an instance needs
//! strictly increasing timestamps along the path; timeless mode counts the
//! full cross product of parallel edges.
//!
//! Instances are never materialized. For each target contract the incident
//! edge lists are grouped by neighbor (already timestamp-sorted in the
//! graph) and every node sequence is counted with a linear merge over the
//! sorted lists: `Σ_{t₂} #(t₁ < t₂)` for P1 and
//! `Σ_{t₂} #(t₁ < t₂)·#(t₃ > t₂)` for P2.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph_store::{Direction, EdgeKind, HeterogeneousGraph, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    P1,
    P2,
}

impl Pattern {
    pub const ALL: [Pattern; 2] = [Pattern::P1, Pattern::P2];

    pub fn node_count(self) -> usize {
        match self {
            Pattern::P1 => 3,
            Pattern::P2 => 4,
        }
    }

    pub fn relation_sequence(self) -> &'static [EdgeKind] {
        match self {
            Pattern::P1 => &[EdgeKind::Call, EdgeKind::Trans],
            Pattern::P2 => &[EdgeKind::Call, EdgeKind::Call, EdgeKind::Trans],
        }
    }

    pub fn classes(self) -> &'static [RefinedClass] {
        match self {
            Pattern::P1 => &RefinedClass::ALL[..2],
            Pattern::P2 => &RefinedClass::ALL[2..],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::P1 => "P1",
            Pattern::P2 => "P2",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RefinedClass {
    P11,
    P12,
    P21,
    P22,
    P23,
    P24,
}

impl RefinedClass {
    pub const ALL: [RefinedClass; 6] = [
        RefinedClass::P11,
        RefinedClass::P12,
        RefinedClass::P21,
        RefinedClass::P22,
        RefinedClass::P23,
        RefinedClass::P24,
    ];

    pub fn pattern(self) -> Pattern {
        match self {
            RefinedClass::P11 | RefinedClass::P12 => Pattern::P1,
            _ => Pattern::P2,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RefinedClass::P11 => "P11",
            RefinedClass::P12 => "P12",
            RefinedClass::P21 => "P21",
            RefinedClass::P22 => "P22",
            RefinedClass::P23 => "P23",
            RefinedClass::P24 => "P24",
        }
    }
}

impl fmt::Display for RefinedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    #[default]
    TimeAware,
    Timeless,
}

impl TimeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeMode::TimeAware => "time_aware",
            TimeMode::Timeless => "timeless",
        }
    }
}

impl FromStr for TimeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time_aware" | "time-aware" => Ok(TimeMode::TimeAware),
            "timeless" => Ok(TimeMode::Timeless),
            other => Err(format!("unknown time mode `{other}`")),
        }
    }
}

impl fmt::Display for TimeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Refined class from node equalities: head vs tail, and (for P2) whether
/// the second contract is the target itself.
pub fn classify(pattern: Pattern, nodes: &[NodeId]) -> RefinedClass {
    debug_assert_eq!(nodes.len(), pattern.node_count());
    let closed = nodes.first() == nodes.last();
    match pattern {
        Pattern::P1 if closed => RefinedClass::P12,
        Pattern::P1 => RefinedClass::P11,
        Pattern::P2 => match (nodes[1] == nodes[2], closed) {
            (false, false) => RefinedClass::P21,
            (false, true) => RefinedClass::P22,
            (true, false) => RefinedClass::P23,
            (true, true) => RefinedClass::P24,
        },
    }
}

/// All instances with one node sequence, merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SuperMetapath {
    pattern: Pattern,
    refined_class: RefinedClass,
    nodes: [NodeId; 4],
    omega: u64,
}

impl SuperMetapath {
    /// Panics if `nodes` does not have the pattern's length or `omega` is 0.
    pub fn new(pattern: Pattern, nodes: &[NodeId], omega: u64) -> Self {
        assert_eq!(nodes.len(), pattern.node_count(), "node sequence length");
        assert!(omega >= 1, "a super metapath needs at least one instance");
        let mut buf = [0; 4];
        buf[..nodes.len()].copy_from_slice(nodes);
        SuperMetapath { pattern, refined_class: classify(pattern, nodes), nodes: buf, omega }
    }

    pub fn pattern(&self) -> Pattern {
        self.pattern
    }

    pub fn refined_class(&self) -> RefinedClass {
        self.refined_class
    }

    pub fn node_sequence(&self) -> &[NodeId] {
        &self.nodes[..self.pattern.node_count()]
    }

    pub fn relation_sequence(&self) -> &'static [EdgeKind] {
        self.pattern.relation_sequence()
    }

    pub fn head(&self) -> NodeId {
        self.nodes[0]
    }

    /// The target contract (second node).
    pub fn target(&self) -> NodeId {
        self.nodes[1]
    }

    pub fn tail(&self) -> NodeId {
        self.nodes[self.pattern.node_count() - 1]
    }

    pub fn omega(&self) -> u64 {
        self.omega
    }
}

impl Ord for SuperMetapath {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.pattern, self.node_sequence(), self.omega).cmp(&(other.pattern, other.node_sequence(), other.omega))
    }
}

impl PartialOrd for SuperMetapath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn refine(sm: &SuperMetapath) -> RefinedClass {
    classify(sm.pattern(), sm.node_sequence())
}

/// `#{(x, y) : x ∈ before, y ∈ after, x < y}` over ascending lists.
pub(crate) fn count_increasing_pairs(before: &[u64], after: &[u64]) -> u64 {
    let mut i = 0;
    let mut total = 0u64;
    for &y in after {
        while i < before.len() && before[i] < y {
            i += 1;
        }
        total += i as u64;
    }
    total
}

/// `#{(x, y, z) : x < y < z}` over ascending lists, summing
/// `#(x < y)·#(z > y)` across the middle list.
pub(crate) fn count_increasing_triples(first: &[u64], middle: &[u64], last: &[u64]) -> u64 {
    let mut i = 0;
    let mut j = 0;
    let mut total = 0u64;
    for &y in middle {
        while i < first.len() && first[i] < y {
            i += 1;
        }
        while j < last.len() && last[j] <= y {
            j += 1;
        }
        total += i as u64 * (last.len() - j) as u64;
    }
    total
}

/// Groups a node's timestamp-sorted adjacency by the opposite endpoint,
/// keeping neighbors that pass `keep`. Output is ordered by neighbor id and
/// each timestamp list stays ascending.
fn by_neighbor(
    g: &HeterogeneousGraph,
    node: NodeId,
    dir: Direction,
    kind: EdgeKind,
    keep: impl Fn(NodeId) -> bool,
) -> Vec<(NodeId, Vec<u64>)> {
    let mut pairs: Vec<(NodeId, u64)> = g
        .adjacent(node, dir, kind)
        .map(|e| {
            let other = match dir {
                Direction::In => e.src,
                Direction::Out => e.dst,
            };
            (other, e.timestamp)
        })
        .filter(|&(other, _)| keep(other))
        .collect();
    // stable sort keeps timestamps ascending within each neighbor
    pairs.sort_by_key(|&(other, _)| other);
    let mut groups: Vec<(NodeId, Vec<u64>)> = Vec::new();
    for (other, t) in pairs {
        match groups.last_mut() {
            Some((last, ts)) if *last == other => ts.push(t),
            _ => groups.push((other, vec![t])),
        }
    }
    groups
}

fn p1_for_target(g: &HeterogeneousGraph, target: NodeId, mode: TimeMode) -> Vec<SuperMetapath> {
    let heads = by_neighbor(g, target, Direction::In, EdgeKind::Call, |v| g.is_eoa(v));
    if heads.is_empty() {
        return Vec::new();
    }
    let tails = by_neighbor(g, target, Direction::Out, EdgeKind::Trans, |v| g.is_eoa(v));
    let mut out = Vec::new();
    for (head, calls) in &heads {
        for (tail, transfers) in &tails {
            let omega = match mode {
                TimeMode::TimeAware => count_increasing_pairs(calls, transfers),
                TimeMode::Timeless => (calls.len() * transfers.len()) as u64,
            };
            if omega > 0 {
                out.push(SuperMetapath::new(Pattern::P1, &[*head, target, *tail], omega));
            }
        }
    }
    out
}

fn p2_for_target(g: &HeterogeneousGraph, target: NodeId, mode: TimeMode) -> Vec<SuperMetapath> {
    let heads = by_neighbor(g, target, Direction::In, EdgeKind::Call, |v| g.is_eoa(v));
    if heads.is_empty() {
        return Vec::new();
    }
    let relays = by_neighbor(g, target, Direction::Out, EdgeKind::Call, |v| g.is_ca(v));
    let mut out = Vec::new();
    for (relay, relay_calls) in &relays {
        let tails = by_neighbor(g, *relay, Direction::Out, EdgeKind::Trans, |v| g.is_eoa(v));
        for (head, calls) in &heads {
            for (tail, transfers) in &tails {
                let omega = match mode {
                    TimeMode::TimeAware => count_increasing_triples(calls, relay_calls, transfers),
                    TimeMode::Timeless => (calls.len() * relay_calls.len() * transfers.len()) as u64,
                };
                if omega > 0 {
                    out.push(SuperMetapath::new(Pattern::P2, &[*head, target, *relay, *tail], omega));
                }
            }
        }
    }
    out
}

/// Super metapaths of `pattern`, canonically sorted by node sequence.
/// Targets are processed in parallel; the result does not depend on the
/// thread count.
pub fn enumerate(g: &HeterogeneousGraph, pattern: Pattern, mode: TimeMode) -> Vec<SuperMetapath> {
    let targets: Vec<NodeId> = g.node_ids().filter(|&v| g.is_ca(v)).collect();
    let mut supers: Vec<SuperMetapath> = match pattern {
        Pattern::P1 => targets.par_iter().flat_map_iter(|&c| p1_for_target(g, c, mode)).collect(),
        Pattern::P2 => targets.par_iter().flat_map_iter(|&c| p2_for_target(g, c, mode)).collect(),
    };
    supers.par_sort_unstable();
    supers
}

pub fn enumerate_p1(g: &HeterogeneousGraph, mode: TimeMode) -> Vec<SuperMetapath> {
    enumerate(g, Pattern::P1, mode)
}

pub fn enumerate_p2(g: &HeterogeneousGraph, mode: TimeMode) -> Vec<SuperMetapath> {
    enumerate(g, Pattern::P2, mode)
}

/// Reference enumerator: walks every instance with nested loops over the
/// raw edge list and counts group sizes. Quadratic (P1) or cubic (P2) in
/// the edge count, so only for small graphs.
pub fn brute_force_supers(g: &HeterogeneousGraph, pattern: Pattern, mode: TimeMode) -> Vec<SuperMetapath> {
    let edges = g.edges();
    let ok = |earlier: u64, later: u64| mode == TimeMode::Timeless || earlier < later;
    let mut groups: BTreeMap<Vec<NodeId>, u64> = BTreeMap::new();
    for a in edges {
        if a.kind != EdgeKind::Call || !g.is_eoa(a.src) || !g.is_ca(a.dst) {
            continue;
        }
        match pattern {
            Pattern::P1 => {
                for b in edges {
                    if b.kind == EdgeKind::Trans && b.src == a.dst && g.is_eoa(b.dst) && ok(a.timestamp, b.timestamp) {
                        *groups.entry(vec![a.src, a.dst, b.dst]).or_default() += 1;
                    }
                }
            }
            Pattern::P2 => {
                for b in edges {
                    if b.kind != EdgeKind::Call || b.src != a.dst || !g.is_ca(b.dst) || !ok(a.timestamp, b.timestamp) {
                        continue;
                    }
                    for c in edges {
                        if c.kind == EdgeKind::Trans
                            && c.src == b.dst
                            && g.is_eoa(c.dst)
                            && ok(b.timestamp, c.timestamp)
                        {
                            *groups.entry(vec![a.src, a.dst, b.dst, c.dst]).or_default() += 1;
                        }
                    }
                }
            }
        }
    }
    let mut out: Vec<SuperMetapath> =
        groups.into_iter().map(|(nodes, omega)| SuperMetapath::new(pattern, &nodes, omega)).collect();
    out.sort();
    out
}

/// Σω and super counts per refined class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetapathStats {
    pub instances: [u64; 6],
    pub supers: [u64; 6],
}

impl MetapathStats {
    pub fn instances_of(&self, class: RefinedClass) -> u64 {
        self.instances[class.index()]
    }

    pub fn supers_of(&self, class: RefinedClass) -> u64 {
        self.supers[class.index()]
    }

    /// The Sum column: Σω over the pattern's refined classes.
    pub fn instance_sum(&self, pattern: Pattern) -> u64 {
        pattern.classes().iter().map(|c| self.instances_of(*c)).sum()
    }

    pub fn super_sum(&self, pattern: Pattern) -> u64 {
        pattern.classes().iter().map(|c| self.supers_of(*c)).sum()
    }

    /// Table layout: one row per coarse pattern for instance totals and one
    /// for super counts, `-` where a class belongs to the other pattern.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "metapath")?;
        for c in RefinedClass::ALL {
            write!(out, ",{c}")?;
        }
        writeln!(out, ",Sum")?;
        for (suffix, counts, sum) in [
            ("", &self.instances, Self::instance_sum as fn(&Self, Pattern) -> u64),
            ("_supers", &self.supers, Self::super_sum),
        ] {
            for p in Pattern::ALL {
                write!(out, "{p}{suffix}")?;
                for c in RefinedClass::ALL {
                    if c.pattern() == p {
                        write!(out, ",{}", counts[c.index()])?;
                    } else {
                        write!(out, ",-")?;
                    }
                }
                writeln!(out, ",{}", sum(self, p))?;
            }
        }
        Ok(())
    }
}

pub fn metapath_stats(supers: &[SuperMetapath]) -> MetapathStats {
    let mut s = MetapathStats::default();
    for sm in supers {
        let i = sm.refined_class().index();
        s.instances[i] += sm.omega();
        s.supers[i] += 1;
    }
    s
}

/// Audit dump: `pattern,refined_class,node_sequence,omega`, node sequence
/// as `|`-joined account ids, in the given (canonical) order.
pub fn write_dump<W: Write>(g: &HeterogeneousGraph, supers: &[SuperMetapath], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pattern", "refined_class", "node_sequence", "omega"])?;
    for sm in supers {
        let seq = sm.node_sequence().iter().map(|&v| g.account(v)).collect::<Vec<_>>().join("|");
        w.write_record([sm.pattern().as_str(), sm.refined_class().as_str(), &seq, &sm.omega().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_store::{GraphBuilder, NodeType};

    struct Fixture {
        b: GraphBuilder,
    }

    impl Fixture {
        fn new(eoas: &[&str], cas: &[&str]) -> Self {
            let mut b = GraphBuilder::new();
            for a in eoas {
                b.add_node(a, NodeType::Eoa).unwrap();
            }
            for a in cas {
                b.add_node(a, NodeType::Ca).unwrap();
            }
            Fixture { b }
        }

        fn edge(&mut self, src: &str, dst: &str, kind: EdgeKind, t: u64) -> &mut Self {
            let s = self.b.node_id(src).unwrap();
            let d = self.b.node_id(dst).unwrap();
            self.b.add_edge(s, d, kind, t, 1);
            self
        }

        fn build(self) -> HeterogeneousGraph {
            self.b.build()
        }
    }

    fn ids(g: &HeterogeneousGraph, names: &[&str]) -> Vec<NodeId> {
        names.iter().map(|n| g.node_id(n).unwrap()).collect()
    }

    #[test]
    fn pair_and_triple_counters() {
        assert_eq!(count_increasing_pairs(&[1, 4], &[2, 5]), 3);
        assert_eq!(count_increasing_pairs(&[5], &[2]), 0);
        assert_eq!(count_increasing_pairs(&[2, 2], &[2, 3]), 2);
        assert_eq!(count_increasing_pairs(&[], &[1]), 0);
        assert_eq!(count_increasing_triples(&[1], &[2, 3], &[4]), 2);
        assert_eq!(count_increasing_triples(&[1, 2], &[2], &[2, 3]), 1);
        assert_eq!(count_increasing_triples(&[1, 1, 3], &[2, 4], &[3, 5, 5]), 2 * 3 + 3 * 2);
    }

    fn p1_fixture() -> HeterogeneousGraph {
        let mut f = Fixture::new(&["E1", "E2"], &["C"]);
        f.edge("E1", "C", EdgeKind::Call, 1)
            .edge("E1", "C", EdgeKind::Call, 4)
            .edge("C", "E2", EdgeKind::Trans, 2)
            .edge("C", "E2", EdgeKind::Trans, 5);
        f.build()
    }

    #[test]
    fn p1_time_aware_and_timeless() {
        let g = p1_fixture();
        let seq = ids(&g, &["E1", "C", "E2"]);
        assert_eq!(enumerate_p1(&g, TimeMode::TimeAware), vec![SuperMetapath::new(Pattern::P1, &seq, 3)]);
        assert_eq!(enumerate_p1(&g, TimeMode::Timeless), vec![SuperMetapath::new(Pattern::P1, &seq, 4)]);
    }

    #[test]
    fn p1_unsatisfiable_order_is_empty() {
        let mut f = Fixture::new(&["E1", "E2"], &["C"]);
        f.edge("E1", "C", EdgeKind::Call, 5).edge("C", "E2", EdgeKind::Trans, 2);
        let g = f.build();
        assert!(enumerate_p1(&g, TimeMode::TimeAware).is_empty());
        assert_eq!(enumerate_p1(&g, TimeMode::Timeless).len(), 1);
    }

    #[test]
    fn p2_relay_counts() {
        let mut f = Fixture::new(&["E1", "E2"], &["C", "C2"]);
        f.edge("E1", "C", EdgeKind::Call, 1)
            .edge("C", "C2", EdgeKind::Call, 2)
            .edge("C", "C2", EdgeKind::Call, 3)
            .edge("C2", "E2", EdgeKind::Trans, 4);
        let g = f.build();
        let seq = ids(&g, &["E1", "C", "C2", "E2"]);
        let ta = enumerate_p2(&g, TimeMode::TimeAware);
        assert_eq!(ta, vec![SuperMetapath::new(Pattern::P2, &seq, 2)]);
        assert_eq!(ta[0].refined_class(), RefinedClass::P21);
        assert_eq!(enumerate_p2(&g, TimeMode::Timeless)[0].omega(), 2);
    }

    #[test]
    fn p2_self_call_back_to_head() {
        let mut f = Fixture::new(&["E1"], &["C"]);
        f.edge("E1", "C", EdgeKind::Call, 1).edge("C", "C", EdgeKind::Call, 2).edge("C", "E1", EdgeKind::Trans, 3);
        let g = f.build();
        let supers = enumerate_p2(&g, TimeMode::TimeAware);
        assert_eq!(supers.len(), 1);
        assert_eq!(supers[0].refined_class(), RefinedClass::P24);
        assert_eq!(supers[0].omega(), 1);
        assert_eq!(supers[0].node_sequence(), ids(&g, &["E1", "C", "C", "E1"]).as_slice());
        // the same trans edge also closes a P1 instance
        let p1 = enumerate_p1(&g, TimeMode::TimeAware);
        assert_eq!(p1.len(), 1);
        assert_eq!(p1[0].refined_class(), RefinedClass::P12);
    }

    #[test]
    fn refine_examples() {
        assert_eq!(classify(Pattern::P1, &[0, 5, 1]), RefinedClass::P11);
        assert_eq!(classify(Pattern::P1, &[0, 5, 0]), RefinedClass::P12);
        assert_eq!(classify(Pattern::P2, &[0, 5, 6, 1]), RefinedClass::P21);
        assert_eq!(classify(Pattern::P2, &[0, 5, 6, 0]), RefinedClass::P22);
        assert_eq!(classify(Pattern::P2, &[0, 5, 5, 1]), RefinedClass::P23);
        assert_eq!(classify(Pattern::P2, &[0, 5, 5, 0]), RefinedClass::P24);
        let sm = SuperMetapath::new(Pattern::P2, &[0, 5, 5, 1], 3);
        assert_eq!(refine(&sm), RefinedClass::P23);
        assert_eq!(sm.relation_sequence(), &[EdgeKind::Call, EdgeKind::Call, EdgeKind::Trans]);
    }

    #[test]
    fn positions_are_typed() {
        // a CA head, a CA tail and an EOA relay are all rejected
        let mut f = Fixture::new(&["E1", "E2", "X"], &["C", "D"]);
        f.edge("D", "C", EdgeKind::Call, 1)
            .edge("E1", "C", EdgeKind::Call, 1)
            .edge("C", "D", EdgeKind::Trans, 2)
            .edge("C", "X", EdgeKind::Call, 2)
            .edge("X", "E2", EdgeKind::Trans, 3)
            .edge("C", "E2", EdgeKind::Trans, 3);
        let g = f.build();
        let p1 = enumerate_p1(&g, TimeMode::Timeless);
        assert_eq!(p1, vec![SuperMetapath::new(Pattern::P1, &ids(&g, &["E1", "C", "E2"]), 1)]);
        assert!(enumerate_p2(&g, TimeMode::Timeless).is_empty());
        for p in Pattern::ALL {
            for m in [TimeMode::TimeAware, TimeMode::Timeless] {
                assert_eq!(enumerate(&g, p, m), brute_force_supers(&g, p, m));
            }
        }
    }

    #[test]
    fn empty_graph() {
        let g = GraphBuilder::new().build();
        for p in Pattern::ALL {
            assert!(enumerate(&g, p, TimeMode::TimeAware).is_empty());
            assert!(brute_force_supers(&g, p, TimeMode::Timeless).is_empty());
        }
        assert_eq!(metapath_stats(&[]), MetapathStats::default());
    }

    #[test]
    fn oracle_matches_fixtures() {
        let g = p1_fixture();
        assert_eq!(brute_force_supers(&g, Pattern::P1, TimeMode::TimeAware)[0].omega(), 3);
        assert_eq!(brute_force_supers(&g, Pattern::P1, TimeMode::Timeless)[0].omega(), 4);
    }

    #[test]
    fn stats_single_super() {
        let s = metapath_stats(&[SuperMetapath::new(Pattern::P1, &[0, 1, 2], 3)]);
        assert_eq!(s.instances_of(RefinedClass::P11), 3);
        assert_eq!(s.instance_sum(Pattern::P1), 3);
        assert_eq!(s.instance_sum(Pattern::P2), 0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "metapath,P11,P12,P21,P22,P23,P24,Sum\n\
             P1,3,0,-,-,-,-,3\n\
             P2,-,-,0,0,0,0,0\n\
             P1_supers,1,0,-,-,-,-,1\n\
             P2_supers,-,-,0,0,0,0,0\n"
        );
    }

    #[test]
    fn dump_format() {
        let g = p1_fixture();
        let mut buf = Vec::new();
        write_dump(&g, &enumerate_p1(&g, TimeMode::TimeAware), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "pattern,refined_class,node_sequence,omega\nP1,P11,E1|C|E2,3\n");
    }
}
