//! The 15 per-account manual features and the dense matrix type that
//! carries them (and their augmented versions) through the pipeline.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph_store::{Direction, EdgeKind, HeterogeneousGraph, NodeId};

pub const N_FEATURES: usize = 15;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "income_total",
    "income_avg",
    "income_max",
    "income_var",
    "expense_total",
    "expense_avg",
    "expense_max",
    "expense_var",
    "expense_income_ratio",
    "balance",
    "n_sent",
    "n_received",
    "gini_invest",
    "gini_return",
    "lifecycle",
];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown account `{0}`")]
    NotFound(String),
    #[error("amount {0} is negative or not finite")]
    Domain(f64),
    #[error("row {row} has {found} values, expected {expected}")]
    Dimension { row: usize, found: usize, expected: usize },
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn zeros() -> Self {
        FeatureVector([0.0; N_FEATURES])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|&n| n == name).map(|i| self.0[i])
    }
}

/// Mean-absolute-difference Gini: `Σᵢⱼ|xᵢ−xⱼ| / (2n²μ)`, or 0 when the
/// list is empty or sums to zero.
///
/// Evaluated on sorted values as `Σᵢ (2i−n−1)·x₍ᵢ₎ / (n·Σx)`, which is the
/// same quantity in O(n log n).
pub fn gini(amounts: &[f64]) -> Result<f64, FeatureError> {
    if let Some(&bad) = amounts.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(FeatureError::Domain(bad));
    }
    let n = amounts.len();
    let total: f64 = amounts.iter().sum();
    if n == 0 || total == 0.0 {
        return Ok(0.0);
    }
    let mut sorted = amounts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - nf - 1.0) * x)
        .sum();
    Ok((weighted / (nf * total)).max(0.0))
}

struct Moments {
    total: f64,
    avg: f64,
    max: f64,
    var: f64,
}

fn moments(xs: &[f64]) -> Moments {
    if xs.is_empty() {
        return Moments { total: 0.0, avg: 0.0, max: 0.0, var: 0.0 };
    }
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let avg = total / n;
    let max = xs.iter().copied().fold(0.0, f64::max);
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / n } else { 0.0 };
    Moments { total, avg, max, var }
}

/// Manual features of one account. Only trans edges contribute amounts and
/// counts; the lifecycle spans every incident edge of either kind.
pub fn features_of(g: &HeterogeneousGraph, node: NodeId) -> FeatureVector {
    let incoming: Vec<f64> = g.adjacent(node, Direction::In, EdgeKind::Trans).map(|e| e.value as f64).collect();
    let outgoing: Vec<f64> = g.adjacent(node, Direction::Out, EdgeKind::Trans).map(|e| e.value as f64).collect();
    let income = moments(&incoming);
    let expense = moments(&outgoing);
    let ratio = if income.total > 0.0 { expense.total / income.total } else { 0.0 };

    let mut first = u64::MAX;
    let mut last = 0u64;
    for dir in [Direction::In, Direction::Out] {
        for kind in EdgeKind::ALL {
            for e in g.adjacent(node, dir, kind) {
                first = first.min(e.timestamp);
                last = last.max(e.timestamp);
            }
        }
    }
    let lifecycle = if first <= last { (last - first) as f64 } else { 0.0 };

    // amounts come from u128 and are never negative
    let gini_invest = gini(&incoming).unwrap_or(0.0);
    let gini_return = gini(&outgoing).unwrap_or(0.0);

    FeatureVector([
        income.total,
        income.avg,
        income.max,
        income.var,
        expense.total,
        expense.avg,
        expense.max,
        expense.var,
        ratio,
        income.total - expense.total,
        outgoing.len() as f64,
        incoming.len() as f64,
        gini_invest,
        gini_return,
        lifecycle,
    ])
}

pub fn compute_features(g: &HeterogeneousGraph, account: &str) -> Result<FeatureVector, FeatureError> {
    let id = g.node_id(account).ok_or_else(|| FeatureError::NotFound(account.to_string()))?;
    Ok(features_of(g, id))
}

/// Row-major dense matrix with one labeled row per account.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    accounts: Vec<String>,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix { accounts: Vec::new(), dim, values: Vec::new() }
    }

    pub fn from_rows(accounts: Vec<String>, rows: Vec<Vec<f64>>, dim: usize) -> Result<Self, FeatureError> {
        let mut m = FeatureMatrix::new(dim);
        for (account, row) in accounts.into_iter().zip(rows) {
            m.push_row(account, &row)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, account: String, row: &[f64]) -> Result<(), FeatureError> {
        if row.len() != self.dim {
            return Err(FeatureError::Dimension { row: self.accounts.len(), found: row.len(), expected: self.dim });
        }
        self.accounts.push(account);
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn accounts(&self) -> &[String] {
        &self.accounts
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim.max(1)).take(self.accounts.len())
    }

    /// Account → first row index.
    pub fn index(&self) -> HashMap<&str, usize> {
        let mut idx = HashMap::with_capacity(self.accounts.len());
        for (i, a) in self.accounts.iter().enumerate() {
            idx.entry(a.as_str()).or_insert(i);
        }
        idx
    }

    /// Rows for `accounts`, in that order.
    pub fn select(&self, accounts: &[String]) -> Result<FeatureMatrix, FeatureError> {
        let idx = self.index();
        let mut out = FeatureMatrix::new(self.dim);
        for a in accounts {
            let &i = idx.get(a.as_str()).ok_or_else(|| FeatureError::NotFound(a.clone()))?;
            out.push_row(a.clone(), self.row(i))?;
        }
        Ok(out)
    }

    /// CSV with header `account,f1..fd`; values carry 17 significant
    /// digits. `comment`, if given, is written first as a `# ` line.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<(), FeatureError> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["account".to_string()];
        header.extend((1..=self.dim).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for (i, account) in self.accounts.iter().enumerate() {
            let mut record = Vec::with_capacity(self.dim + 1);
            record.push(account.clone());
            record.extend(self.row(i).iter().map(|v| format!("{v:.16e}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, FeatureError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() || &headers[0] != "account" {
            return Err(FeatureError::Parse { line: 1, msg: "expected header starting with `account`".into() });
        }
        let mut m = FeatureMatrix::new(headers.len() - 1);
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row = record
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| FeatureError::Parse { line, msg: format!("invalid number `{v}`") }))
                .collect::<Result<Vec<_>, _>>()?;
            m.push_row(record[0].to_string(), &row)?;
        }
        Ok(m)
    }
}

/// Row `i` is the feature vector of `accounts[i]`.
pub fn feature_matrix(g: &HeterogeneousGraph, accounts: &[String]) -> Result<FeatureMatrix, FeatureError> {
    let ids = accounts
        .iter()
        .map(|a| g.node_id(a).ok_or_else(|| FeatureError::NotFound(a.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<FeatureVector> = ids.par_iter().map(|&id| features_of(g, id)).collect();
    let mut m = FeatureMatrix::new(N_FEATURES);
    for (a, r) in accounts.iter().zip(rows) {
        m.push_row(a.clone(), r.as_slice())?;
    }
    Ok(m)
}

/// Features of every node in id order.
pub fn all_features(g: &HeterogeneousGraph) -> FeatureMatrix {
    feature_matrix(g, g.accounts()).expect("graph accounts resolve")
}
