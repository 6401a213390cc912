//! Temporal heterogeneous transaction graph.
//!
//! Accounts are either externally owned (EOA) or contracts (CA). Edges are
//! directed, typed (`trans` value transfers, `call` contract invocations),
//! timestamped and valued. Multi-edges are kept. Internal node ids are dense
//! `u32`s assigned in first-seen order; external ids are the account strings
//! from the input files.
//!
//! Adjacency is stored as four CSR blocks, one per (direction, kind), each
//! node's slice sorted by `(timestamp, dst, value)` with remaining ties
//! broken by `src` and insertion order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: unknown edge kind `{kind}` (expected `trans` or `call`)")]
    UnknownKind { line: u64, kind: String },
    #[error("account `{0}` is declared as both EOA and CA")]
    TypeConflict(String),
    #[error("account `{0}` has no declared type and the type file has no default")]
    MissingType(String),
    #[error("unknown account `{0}`")]
    NotFound(String),
    #[error("labeled account `{0}` is not a contract account")]
    LabelNotContract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Trans,
    Call,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 2] = [EdgeKind::Trans, EdgeKind::Call];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Trans => "trans",
            EdgeKind::Call => "call",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trans" => Ok(EdgeKind::Trans),
            "call" => Ok(EdgeKind::Call),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    #[serde(rename = "EOA")]
    Eoa,
    #[serde(rename = "CA")]
    Ca,
}

impl NodeType {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Eoa => "EOA",
            NodeType::Ca => "CA",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("eoa") {
            Ok(NodeType::Eoa)
        } else if s.eq_ignore_ascii_case("ca") {
            Ok(NodeType::Ca)
        } else {
            Err(s.to_string())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TemporalEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    /// Unix seconds.
    pub timestamp: u64,
    /// Wei-scale amount. Carried for call edges too, but only trans values
    /// feed the manual features.
    pub value: u128,
}

/// Declared account types from an `account,type` file.
///
/// A row whose account is `*` sets the default type for accounts the file
/// does not list.
#[derive(Clone, Debug, Default)]
pub struct TypeTable {
    order: Vec<String>,
    types: HashMap<String, NodeType>,
    default: Option<NodeType>,
}

impl TypeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(mut self, default: NodeType) -> Self {
        self.default = Some(default);
        self
    }

    pub fn insert(&mut self, account: &str, ty: NodeType) -> Result<(), GraphError> {
        if account == "*" {
            return match self.default {
                Some(prev) if prev != ty => Err(GraphError::TypeConflict(account.to_string())),
                _ => {
                    self.default = Some(ty);
                    Ok(())
                }
            };
        }
        match self.types.get(account) {
            Some(&prev) if prev != ty => Err(GraphError::TypeConflict(account.to_string())),
            Some(_) => Ok(()),
            None => {
                self.order.push(account.to_string());
                self.types.insert(account.to_string(), ty);
                Ok(())
            }
        }
    }

    pub fn get(&self, account: &str) -> Option<NodeType> {
        self.types.get(account).copied().or(self.default)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if !headers.is_empty() && (headers.len() != 2 || &headers[0] != "account" || &headers[1] != "type") {
            return Err(GraphError::Parse {
                line: 1,
                msg: format!("expected header `account,type`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut table = TypeTable::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 2 {
                return Err(GraphError::Parse { line, msg: format!("expected 2 fields, found {}", record.len()) });
            }
            let ty = NodeType::from_str(&record[1])
                .map_err(|t| GraphError::Parse { line, msg: format!("unknown node type `{t}`") })?;
            table.insert(&record[0], ty)?;
        }
        Ok(table)
    }
}

/// Where node types come from during ingestion.
#[derive(Clone, Debug)]
pub enum NodeTypeSource {
    Explicit(TypeTable),
    /// An account is a CA iff it is the destination of at least one call
    /// edge. (Sources of trans edges that also receive calls are already
    /// covered by that rule.) Every other account is an EOA.
    Infer,
}

/// Accumulates typed nodes and edges, then freezes them into a
/// [`HeterogeneousGraph`].
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    accounts: Vec<String>,
    index: HashMap<String, NodeId>,
    types: Vec<NodeType>,
    edges: Vec<TemporalEdge>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `account` with `ty`, or checks it against an earlier
    /// registration.
    pub fn add_node(&mut self, account: &str, ty: NodeType) -> Result<NodeId, GraphError> {
        if let Some(&id) = self.index.get(account) {
            if self.types[id as usize] != ty {
                return Err(GraphError::TypeConflict(account.to_string()));
            }
            return Ok(id);
        }
        let id = NodeId::try_from(self.accounts.len()).expect("node count exceeds u32");
        self.accounts.push(account.to_string());
        self.index.insert(account.to_string(), id);
        self.types.push(ty);
        Ok(id)
    }

    pub fn node_id(&self, account: &str) -> Option<NodeId> {
        self.index.get(account).copied()
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind, timestamp: u64, value: u128) {
        assert!((src as usize) < self.accounts.len() && (dst as usize) < self.accounts.len());
        self.edges.push(TemporalEdge { src, dst, kind, timestamp, value });
    }

    pub fn build(self) -> HeterogeneousGraph {
        let n = self.accounts.len();
        let adjacency = [
            Csr::build(n, &self.edges, Direction::In, EdgeKind::Trans),
            Csr::build(n, &self.edges, Direction::In, EdgeKind::Call),
            Csr::build(n, &self.edges, Direction::Out, EdgeKind::Trans),
            Csr::build(n, &self.edges, Direction::Out, EdgeKind::Call),
        ];
        HeterogeneousGraph {
            accounts: self.accounts,
            index: self.index,
            types: self.types,
            edges: self.edges,
            adjacency,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    edge_ids: Vec<usize>,
}

impl Csr {
    fn build(n: usize, edges: &[TemporalEdge], dir: Direction, kind: EdgeKind) -> Self {
        let owner = |e: &TemporalEdge| match dir {
            Direction::In => e.dst as usize,
            Direction::Out => e.src as usize,
        };
        let mut offsets = vec![0usize; n + 1];
        for e in edges.iter().filter(|e| e.kind == kind) {
            offsets[owner(e) + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut edge_ids = vec![0usize; offsets[n]];
        for (i, e) in edges.iter().enumerate().filter(|(_, e)| e.kind == kind) {
            let slot = &mut cursor[owner(e)];
            edge_ids[*slot] = i;
            *slot += 1;
        }
        for v in 0..n {
            edge_ids[offsets[v]..offsets[v + 1]].sort_by_key(|&i| {
                let e = &edges[i];
                (e.timestamp, e.dst, e.value, e.src, i)
            });
        }
        Csr { offsets, edge_ids }
    }

    fn slice(&self, node: NodeId) -> &[usize] {
        let v = node as usize;
        &self.edge_ids[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Node-typed temporal multigraph. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeterogeneousGraph {
    accounts: Vec<String>,
    index: HashMap<String, NodeId>,
    types: Vec<NodeType>,
    edges: Vec<TemporalEdge>,
    adjacency: [Csr; 4],
}

impl HeterogeneousGraph {
    pub fn num_nodes(&self) -> usize {
        self.accounts.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        0..self.accounts.len() as NodeId
    }

    pub fn account(&self, id: NodeId) -> &str {
        &self.accounts[id as usize]
    }

    pub fn accounts(&self) -> &[String] {
        &self.accounts
    }

    pub fn node_id(&self, account: &str) -> Option<NodeId> {
        self.index.get(account).copied()
    }

    pub fn require(&self, account: &str) -> Result<NodeId, GraphError> {
        self.node_id(account).ok_or_else(|| GraphError::NotFound(account.to_string()))
    }

    pub fn node_type(&self, id: NodeId) -> NodeType {
        self.types[id as usize]
    }

    pub fn is_ca(&self, id: NodeId) -> bool {
        self.types[id as usize] == NodeType::Ca
    }

    pub fn is_eoa(&self, id: NodeId) -> bool {
        self.types[id as usize] == NodeType::Eoa
    }

    /// Edges in ingestion order.
    pub fn edges(&self) -> &[TemporalEdge] {
        &self.edges
    }

    fn csr(&self, dir: Direction, kind: EdgeKind) -> &Csr {
        let d = match dir {
            Direction::In => 0,
            Direction::Out => 2,
        };
        let k = match kind {
            EdgeKind::Trans => 0,
            EdgeKind::Call => 1,
        };
        &self.adjacency[d + k]
    }

    /// Timestamp-sorted edges of `node` in one direction and kind.
    pub fn adjacent(
        &self,
        node: NodeId,
        dir: Direction,
        kind: EdgeKind,
    ) -> impl ExactSizeIterator<Item = &TemporalEdge> + '_ {
        self.csr(dir, kind).slice(node).iter().map(move |&i| &self.edges[i])
    }

    /// [`adjacent`](Self::adjacent) addressed by external account id.
    pub fn adjacency(&self, account: &str, dir: Direction, kind: EdgeKind) -> Result<Vec<&TemporalEdge>, GraphError> {
        let id = self.require(account)?;
        Ok(self.adjacent(id, dir, kind).collect())
    }

    pub fn degree(&self, node: NodeId, dir: Direction, kind: EdgeKind) -> usize {
        self.csr(dir, kind).slice(node).len()
    }

    /// Writes the node table (`account,type`, id order) and the edge table
    /// (`src,dst,kind,timestamp,value`, ingestion order). Re-ingesting the
    /// pair with [`NodeTypeSource::Explicit`] reproduces this graph exactly.
    pub fn write_snapshot<W1: Write, W2: Write>(&self, edges_out: W1, nodes_out: W2) -> Result<(), GraphError> {
        let mut nodes = csv::Writer::from_writer(nodes_out);
        nodes.write_record(["account", "type"])?;
        for (account, ty) in self.accounts.iter().zip(&self.types) {
            nodes.write_record([account.as_str(), ty.as_str()])?;
        }
        nodes.flush()?;

        let mut edges = csv::Writer::from_writer(edges_out);
        edges.write_record(["src", "dst", "kind", "timestamp", "value"])?;
        for e in &self.edges {
            edges.write_record([
                self.account(e.src),
                self.account(e.dst),
                e.kind.as_str(),
                &e.timestamp.to_string(),
                &e.value.to_string(),
            ])?;
        }
        edges.flush()?;
        Ok(())
    }
}

struct RawEdge {
    src: String,
    dst: String,
    kind: EdgeKind,
    timestamp: u64,
    value: u128,
}

fn read_edge_rows<R: Read>(reader: R) -> Result<Vec<RawEdge>, GraphError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let expected = ["src", "dst", "kind", "timestamp", "value"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(GraphError::Parse {
            line: 1,
            msg: format!(
                "expected header `src,dst,kind,timestamp,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(GraphError::Parse { line, msg: e.to_string() });
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 5 {
            return Err(GraphError::Parse { line, msg: format!("expected 5 fields, found {}", record.len()) });
        }
        let kind = EdgeKind::from_str(&record[2]).map_err(|kind| GraphError::UnknownKind { line, kind })?;
        let timestamp = record[3]
            .parse::<u64>()
            .map_err(|_| GraphError::Parse { line, msg: format!("invalid timestamp `{}`", &record[3]) })?;
        let value = record[4]
            .parse::<u128>()
            .map_err(|_| GraphError::Parse { line, msg: format!("invalid value `{}`", &record[4]) })?;
        if record[0].is_empty() || record[1].is_empty() {
            return Err(GraphError::Parse { line, msg: "empty account id".into() });
        }
        rows.push(RawEdge { src: record[0].to_string(), dst: record[1].to_string(), kind, timestamp, value });
    }
    Ok(rows)
}

/// Parses an edge CSV (`src,dst,kind,timestamp,value`, header required)
/// and types every account from `types`.
///
/// With an explicit table, listed accounts are registered first in file
/// order, so isolated accounts survive and snapshots round-trip.
pub fn ingest_edges<R: Read>(edge_records: R, types: NodeTypeSource) -> Result<HeterogeneousGraph, GraphError> {
    let rows = read_edge_rows(edge_records)?;
    let mut builder = GraphBuilder::new();
    match &types {
        NodeTypeSource::Explicit(table) => {
            for account in &table.order {
                builder.add_node(account, table.types[account])?;
            }
        }
        NodeTypeSource::Infer => {}
    }

    let inferred: BTreeSet<&str> = match &types {
        NodeTypeSource::Infer => rows
            .iter()
            .filter(|r| r.kind == EdgeKind::Call)
            .map(|r| r.dst.as_str())
            .collect(),
        NodeTypeSource::Explicit(_) => BTreeSet::new(),
    };
    let type_of = |account: &str| -> Result<NodeType, GraphError> {
        match &types {
            NodeTypeSource::Explicit(table) => {
                table.get(account).ok_or_else(|| GraphError::MissingType(account.to_string()))
            }
            NodeTypeSource::Infer => Ok(if inferred.contains(account) { NodeType::Ca } else { NodeType::Eoa }),
        }
    };

    for row in &rows {
        let src = match builder.node_id(&row.src) {
            Some(id) => id,
            None => builder.add_node(&row.src, type_of(&row.src)?)?,
        };
        let dst = match builder.node_id(&row.dst) {
            Some(id) => id,
            None => builder.add_node(&row.dst, type_of(&row.dst)?)?,
        };
        builder.add_edge(src, dst, row.kind, row.timestamp, row.value);
    }
    Ok(builder.build())
}

/// Homogeneous projection: timestamps and kinds dropped, parallel edges
/// merged. Node ids are shared with the source graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomogeneousGraph {
    pub accounts: Vec<String>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

impl HomogeneousGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

pub fn project_homogeneous(g: &HeterogeneousGraph) -> HomogeneousGraph {
    HomogeneousGraph {
        accounts: g.accounts.clone(),
        edges: g.edges.iter().map(|e| (e.src, e.dst)).collect(),
    }
}

/// Known Ponzi contracts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub ponzi_accounts: BTreeSet<String>,
    pub source: String,
}

impl LabelSet {
    pub fn new(source: impl Into<String>) -> Self {
        LabelSet { ponzi_accounts: BTreeSet::new(), source: source.into() }
    }

    pub fn len(&self) -> usize {
        self.ponzi_accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ponzi_accounts.is_empty()
    }

    pub fn contains(&self, account: &str) -> bool {
        self.ponzi_accounts.contains(account)
    }

    /// Reads one account per line; blank lines and `#` comments are skipped.
    pub fn from_reader<R: Read>(reader: R, source: impl Into<String>) -> Result<Self, GraphError> {
        let mut labels = LabelSet::new(source);
        for line in BufReader::new(reader).lines() {
            let line = line?;
            let account = line.trim();
            if account.is_empty() || account.starts_with('#') {
                continue;
            }
            labels.ponzi_accounts.insert(account.to_string());
        }
        Ok(labels)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), GraphError> {
        for account in &self.ponzi_accounts {
            writeln!(out, "{account}")?;
        }
        Ok(())
    }

    /// Every label must name an existing contract account.
    pub fn validate(&self, g: &HeterogeneousGraph) -> Result<(), GraphError> {
        for account in &self.ponzi_accounts {
            let id = g.require(account)?;
            if !g.is_ca(id) {
                return Err(GraphError::LabelNotContract(account.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_ca: usize,
    pub n_eoa: usize,
    pub n_call_edges: usize,
    pub n_trans_edges: usize,
    pub n_labels: usize,
}

pub fn stats(g: &HeterogeneousGraph, labels: &LabelSet) -> GraphStats {
    let n_ca = g.types.iter().filter(|&&t| t == NodeType::Ca).count();
    let n_call_edges = g.edges.iter().filter(|e| e.kind == EdgeKind::Call).count();
    GraphStats {
        n_nodes: g.num_nodes(),
        n_edges: g.num_edges(),
        n_ca,
        n_eoa: g.num_nodes() - n_ca,
        n_call_edges,
        n_trans_edges: g.num_edges() - n_call_edges,
        n_labels: labels.len(),
    }
}
