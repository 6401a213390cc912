//! Top-K filtering, head-group normalization and feature aggregation into
//! target contracts.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::graph_store::{HeterogeneousGraph, NodeId};
use crate::metapath::{Pattern, SuperMetapath};

/// K grid used for filtering sweeps, in percent.
pub const K_GRID: [f64; 10] = [1.0, 3.0, 5.0, 7.0, 9.0, 10.0, 20.0, 30.0, 40.0, 50.0];

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("k_percent must lie in (0, 100], got {0}")]
    InvalidK(f64),
    #[error("no base feature row for account `{0}`")]
    MissingFeatures(String),
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no aggregate computed for pattern {0}")]
    MissingPattern(Pattern),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopKConfig {
    k_percent: f64,
}

impl TopKConfig {
    pub fn new(k_percent: f64) -> Result<Self, AggregateError> {
        if k_percent.is_finite() && k_percent > 0.0 && k_percent <= 100.0 {
            Ok(TopKConfig { k_percent })
        } else {
            Err(AggregateError::InvalidK(k_percent))
        }
    }

    /// K = 100%, i.e. no filtering.
    pub fn keep_all() -> Self {
        TopKConfig { k_percent: 100.0 }
    }

    pub fn k_percent(&self) -> f64 {
        self.k_percent
    }

    /// `ceil(k% · n)`, at least one for a non-empty group.
    pub fn retained_count(&self, group_size: usize) -> usize {
        if group_size == 0 {
            return 0;
        }
        // multiply before dividing so integral percentages stay exact
        let exact = self.k_percent * group_size as f64 / 100.0;
        (exact.ceil() as usize).clamp(1, group_size)
    }
}

/// Keeps the highest-ω supers of every group, grouping by refined class
/// (or by coarse pattern when `use_refinement` is off). Ties go to the
/// smaller node sequence. Output is in canonical order.
pub fn top_k_filter(supers: &[SuperMetapath], cfg: &TopKConfig, use_refinement: bool) -> Vec<SuperMetapath> {
    let mut groups: BTreeMap<(Pattern, usize), Vec<&SuperMetapath>> = BTreeMap::new();
    for sm in supers {
        let key = if use_refinement {
            (sm.pattern(), sm.refined_class().index())
        } else {
            (sm.pattern(), 0)
        };
        groups.entry(key).or_default().push(sm);
    }
    let mut retained = Vec::new();
    for members in groups.values_mut() {
        members.sort_by(|a, b| {
            (Reverse(a.omega()), a.node_sequence()).cmp(&(Reverse(b.omega()), b.node_sequence()))
        });
        let keep = cfg.retained_count(members.len());
        retained.extend(members[..keep].iter().map(|sm| **sm));
    }
    retained.sort();
    retained
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedSuper {
    pub super_metapath: SuperMetapath,
    /// ω divided by the total ω of retained supers of the same pattern
    /// that share this head account.
    pub omega_hat: f64,
}

pub fn normalize(retained: &[SuperMetapath], pattern: Pattern) -> Vec<NormalizedSuper> {
    let mut head_totals: HashMap<NodeId, u128> = HashMap::new();
    for sm in retained.iter().filter(|sm| sm.pattern() == pattern) {
        *head_totals.entry(sm.head()).or_default() += sm.omega() as u128;
    }
    retained
        .iter()
        .filter(|sm| sm.pattern() == pattern)
        .map(|sm| NormalizedSuper {
            super_metapath: *sm,
            omega_hat: sm.omega() as f64 / head_totals[&sm.head()] as f64,
        })
        .collect()
}

/// Aggregated vectors of one pattern, keyed by target contract. Contracts
/// without retained supers are absent and read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternAggregate {
    pub pattern: Pattern,
    pub dim: usize,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl PatternAggregate {
    pub fn get(&self, account: &str) -> Option<&[f64]> {
        self.rows.get(account).map(Vec::as_slice)
    }

    fn add_into(&self, account: &str, acc: &mut [f64]) {
        if let Some(row) = self.get(account) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
    }
}

/// For each target contract, `Σ ω̂ · Σ_{v in node sequence} x_v` over the
/// supers whose second node is that contract. The node sum runs over the
/// whole sequence, target included, and repeats a node as often as it
/// appears.
pub fn aggregate(
    g: &HeterogeneousGraph,
    normalized: &[NormalizedSuper],
    base: &FeatureMatrix,
    pattern: Pattern,
) -> Result<PatternAggregate, AggregateError> {
    let dim = base.dim();
    let index = base.index();
    let mut row_of: HashMap<NodeId, usize> = HashMap::new();
    let mut by_target: BTreeMap<NodeId, Vec<&NormalizedSuper>> = BTreeMap::new();
    for ns in normalized.iter().filter(|ns| ns.super_metapath.pattern() == pattern) {
        for &v in ns.super_metapath.node_sequence() {
            if let std::collections::hash_map::Entry::Vacant(slot) = row_of.entry(v) {
                let account = g.account(v);
                let &row = index.get(account).ok_or_else(|| AggregateError::MissingFeatures(account.to_string()))?;
                slot.insert(row);
            }
        }
        by_target.entry(ns.super_metapath.target()).or_default().push(ns);
    }

    let rows: Vec<(String, Vec<f64>)> = by_target
        .par_iter()
        .map(|(&target, group)| {
            let mut acc = vec![0.0; dim];
            let mut path = vec![0.0; dim];
            for ns in group {
                path.iter_mut().for_each(|p| *p = 0.0);
                for v in ns.super_metapath.node_sequence() {
                    for (p, x) in path.iter_mut().zip(base.row(row_of[v])) {
                        *p += x;
                    }
                }
                for (a, p) in acc.iter_mut().zip(&path) {
                    *a += ns.omega_hat * p;
                }
            }
            (g.account(target).to_string(), acc)
        })
        .collect();

    Ok(PatternAggregate { pattern, dim, rows: rows.into_iter().collect() })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// The aggregate alone.
    #[default]
    Replace,
    /// Base plus aggregate.
    Sum,
    /// Base followed by the aggregate(s).
    Concat,
}

impl FromStr for CombineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replace" => Ok(CombineMode::Replace),
            "sum" => Ok(CombineMode::Sum),
            "concat" => Ok(CombineMode::Concat),
            other => Err(format!("unknown combine mode `{other}`")),
        }
    }
}

impl fmt::Display for CombineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CombineMode::Replace => "replace",
            CombineMode::Sum => "sum",
            CombineMode::Concat => "concat",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternSet {
    P1,
    #[default]
    P2,
    P1p2,
}

impl PatternSet {
    pub fn patterns(self) -> &'static [Pattern] {
        match self {
            PatternSet::P1 => &[Pattern::P1],
            PatternSet::P2 => &[Pattern::P2],
            PatternSet::P1p2 => &[Pattern::P1, Pattern::P2],
        }
    }
}

impl FromStr for PatternSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(PatternSet::P1),
            "p2" => Ok(PatternSet::P2),
            "p1p2" | "p1+p2" => Ok(PatternSet::P1p2),
            other => Err(format!("unknown pattern set `{other}`")),
        }
    }
}

impl fmt::Display for PatternSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternSet::P1 => "p1",
            PatternSet::P2 => "p2",
            PatternSet::P1p2 => "p1p2",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentedFeatures {
    pub p1: Option<PatternAggregate>,
    pub p2: Option<PatternAggregate>,
}

impl AugmentedFeatures {
    pub fn insert(&mut self, agg: PatternAggregate) {
        match agg.pattern {
            Pattern::P1 => self.p1 = Some(agg),
            Pattern::P2 => self.p2 = Some(agg),
        }
    }

    pub fn pattern(&self, p: Pattern) -> Option<&PatternAggregate> {
        match p {
            Pattern::P1 => self.p1.as_ref(),
            Pattern::P2 => self.p2.as_ref(),
        }
    }
}

/// Merges base rows with their aggregates.
///
/// * `replace`: the aggregate (P1+P2: elementwise sum of both).
/// * `sum`: base + aggregate(s).
/// * `concat`: base ∥ x̂ per pattern (2× or 3× the base width).
///
/// Accounts that head no target group (EOAs included) contribute zero
/// aggregates.
pub fn combine(
    base: &FeatureMatrix,
    aug: &AugmentedFeatures,
    mode: CombineMode,
    patterns: PatternSet,
) -> Result<FeatureMatrix, AggregateError> {
    let dim = base.dim();
    let parts = patterns
        .patterns()
        .iter()
        .map(|&p| {
            let agg = aug.pattern(p).ok_or(AggregateError::MissingPattern(p))?;
            if agg.dim != dim {
                return Err(AggregateError::Dimension { expected: dim, found: agg.dim });
            }
            Ok(agg)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let out_dim = match mode {
        CombineMode::Replace | CombineMode::Sum => dim,
        CombineMode::Concat => dim * (1 + parts.len()),
    };
    let mut out = FeatureMatrix::new(out_dim);
    let mut row = Vec::with_capacity(out_dim);
    for (i, account) in base.accounts().iter().enumerate() {
        row.clear();
        match mode {
            CombineMode::Replace => {
                row.resize(dim, 0.0);
                parts.iter().for_each(|agg| agg.add_into(account, &mut row));
            }
            CombineMode::Sum => {
                row.extend_from_slice(base.row(i));
                parts.iter().for_each(|agg| agg.add_into(account, &mut row));
            }
            CombineMode::Concat => {
                row.extend_from_slice(base.row(i));
                for agg in &parts {
                    let start = row.len();
                    row.resize(start + dim, 0.0);
                    agg.add_into(account, &mut row[start..]);
                }
            }
        }
        out.push_row(account.clone(), &row).expect("row width matches");
    }
    Ok(out)
}
