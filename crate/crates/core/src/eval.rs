//! Evaluation protocol: balanced negative sampling, repeated stratified
//! k-fold cross-validation and micro-F1 scoring with a built-in logistic
//! regression (or externally supplied scores).

use std::collections::BTreeMap;
use std::io::Read;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::graph_store::{GraphError, HeterogeneousGraph, LabelSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no samples to score")]
    Empty,
    #[error("class {class} has {have} samples, need at least {need} for {need}-fold CV")]
    TooFewSamples { class: bool, have: usize, need: usize },
    #[error("{positives} labeled contracts but only {available} unlabeled contracts to sample as negatives")]
    InsufficientNegatives { positives: usize, available: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("no external score for account `{0}`")]
    MissingScore(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// First 16 hex digits of the SHA-256 of `value`'s JSON encoding.
pub fn stable_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// All labeled Ponzi contracts (positive) followed by an equal number of
/// unlabeled contracts drawn uniformly without replacement (negative).
/// Negatives keep graph order.
pub fn sample_negatives(
    g: &HeterogeneousGraph,
    labels: &LabelSet,
    seed: u64,
) -> Result<Vec<(String, bool)>, EvalError> {
    labels.validate(g)?;
    let pool: Vec<&str> = g
        .node_ids()
        .filter(|&v| g.is_ca(v) && !labels.contains(g.account(v)))
        .map(|v| g.account(v))
        .collect();
    let k = labels.len();
    if pool.len() < k {
        return Err(EvalError::InsufficientNegatives { positives: k, available: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();

    let mut out: Vec<(String, bool)> = labels.ponzi_accounts.iter().map(|a| (a.clone(), true)).collect();
    out.extend(picked.into_iter().map(|i| (pool[i].to_string(), false)));
    Ok(out)
}

/// Micro-averaged F1 over both classes. For single-label binary data the
/// pooled TP, FP and FN make this equal to accuracy.
pub fn micro_f1(predictions: &[bool], truth: &[bool]) -> Result<f64, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: predictions.len(), right: truth.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for class in [false, true] {
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    /// Candidate L2 strengths; one is picked per fold on a stratified
    /// holdout of the training split.
    pub l2_grid: Vec<f64>,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    /// Apply `sign(x)·ln(1+|x|)` before standardizing.
    pub log_transform: bool,
    /// Share of the training split held out for choosing L2.
    pub holdout_fraction: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            l2_grid: vec![1e-3, 1e-2, 1e-1, 1.0],
            max_iter: 1000,
            tol: 1e-6,
            log_transform: true,
            holdout_fraction: 0.25,
        }
    }
}

fn signed_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Per-column centering and scaling fitted on training rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub log_transform: bool,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]], log_transform: bool) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let pre = |x: f64| if log_transform { signed_log(x) } else { x };
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, &x) in mean.iter_mut().zip(*r) {
                *m += pre(x);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, &x), m) in var.iter_mut().zip(*r).zip(&mean) {
                let d = pre(x) - m;
                *v += d * d;
            }
        }
        let scale = var.into_iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Standardizer { mean, scale, log_transform }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&x, m), s)| {
                let x = if self.log_transform { signed_log(x) } else { x };
                (x - m) / s
            })
            .collect()
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss plus `l2/2·‖w‖²` (intercept unpenalized) and its
/// gradient. `params` holds the weights followed by the intercept.
pub fn loss_and_gradient(params: &[f64], x: &[Vec<f64>], y: &[bool], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let n = x.len().max(1) as f64;
    let (w, b) = params.split_at(d);
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b[0];
        let t = if label { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, a) in grad.iter_mut().zip(row) {
            *g += r * a;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * w.iter().map(|c| c * c).sum::<f64>();
    for (g, c) in grad.iter_mut().zip(w) {
        *g += l2 * c;
    }
    (loss, grad)
}

/// Fitted L2-regularized logistic regression over standardized inputs.
#[derive(Clone, Debug)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    pub params: Vec<f64>,
}

impl LogisticModel {
    /// Full-batch gradient descent from zero with step `1/L`, where `L`
    /// bounds the loss curvature by `¼·(1 + Σⱼ mean(xⱼ²)) + l2`.
    pub fn fit(rows: &[&[f64]], y: &[bool], l2: f64, params: &LogRegParams) -> Self {
        let standardizer = Standardizer::fit(rows, params.log_transform);
        let x: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();
        let d = standardizer.mean.len();
        let n = x.len().max(1) as f64;
        let trace: f64 = x.iter().flat_map(|r| r.iter().map(|a| a * a)).sum::<f64>() / n;
        let step = 1.0 / (0.25 * (1.0 + trace) + l2);
        let mut theta = vec![0.0; d + 1];
        for _ in 0..params.max_iter {
            let (_, grad) = loss_and_gradient(&theta, &x, y, l2);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm < params.tol {
                break;
            }
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= step * g;
            }
        }
        LogisticModel { standardizer, params: theta }
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let x = self.standardizer.transform(row);
        let d = x.len();
        let z = x.iter().zip(&self.params[..d]).map(|(a, c)| a * c).sum::<f64>() + self.params[d];
        sigmoid(z)
    }

    pub fn predict(&self, row: &[f64]) -> bool {
        self.probability(row) >= 0.5
    }
}

/// Fold index per sample. Each class is shuffled and dealt round-robin, so
/// per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], n_folds: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut fold_of = vec![0; labels.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for (pos, i) in members.into_iter().enumerate() {
            fold_of[i] = pos % n_folds;
        }
    }
    fold_of
}

/// Trains on `train_rows` and labels `test_rows`. L2 is chosen from
/// `params.l2_grid` on a seeded stratified holdout of the training rows
/// (first best wins), then the model is refit on all training rows.
pub fn train_predict_logreg(
    train_rows: &[&[f64]],
    train_labels: &[bool],
    test_rows: &[&[f64]],
    params: &LogRegParams,
    seed: u64,
) -> Result<Vec<bool>, EvalError> {
    if train_rows.len() != train_labels.len() {
        return Err(EvalError::LengthMismatch { left: train_rows.len(), right: train_labels.len() });
    }
    if train_rows.is_empty() {
        return Err(EvalError::Empty);
    }
    for (i, r) in train_rows.iter().chain(test_rows).enumerate() {
        if r.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite { row: i });
        }
    }
    if params.l2_grid.is_empty() {
        return Err(EvalError::InvalidConfig("l2_grid is empty".into()));
    }

    let l2 = if params.l2_grid.len() == 1 {
        params.l2_grid[0]
    } else {
        select_l2(train_rows, train_labels, params, seed)
    };
    let model = LogisticModel::fit(train_rows, train_labels, l2, params);
    Ok(test_rows.iter().map(|r| model.predict(r)).collect())
}

fn select_l2(rows: &[&[f64]], labels: &[bool], params: &LogRegParams, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut holdout = vec![false; rows.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let take = (members.len() as f64 * params.holdout_fraction).round() as usize;
        // keep at least one training example of the class
        let take = take.min(members.len().saturating_sub(1));
        for &i in &members[..take] {
            holdout[i] = true;
        }
    }
    let split = |want: bool| -> (Vec<&[f64]>, Vec<bool>) {
        (0..rows.len()).filter(|&i| holdout[i] == want).map(|i| (rows[i], labels[i])).unzip()
    };
    let (fit_rows, fit_labels) = split(false);
    let (val_rows, val_labels) = split(true);
    if val_rows.is_empty() {
        return params.l2_grid[0];
    }
    let mut best = (f64::NEG_INFINITY, params.l2_grid[0]);
    for &l2 in &params.l2_grid {
        let model = LogisticModel::fit(&fit_rows, &fit_labels, l2, params);
        let preds: Vec<bool> = val_rows.iter().map(|r| model.predict(r)).collect();
        let score = micro_f1(&preds, &val_labels).unwrap_or(0.0);
        if score > best.0 {
            best = (score, l2);
        }
    }
    best.1
}

/// Scores keyed by account from an `account,score` CSV; predictions
/// threshold at 0.5.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub scores: BTreeMap<String, f64>,
}

impl ExternalScores {
    pub fn from_reader<R: Read>(input: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "account" || &headers[1] != "score" {
            return Err(EvalError::Parse { line: 1, msg: "expected header `account,score`".into() });
        }
        let mut scores = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let score: f64 = record[1]
                .parse()
                .map_err(|_| EvalError::Parse { line, msg: format!("invalid score `{}`", &record[1]) })?;
            scores.insert(record[0].to_string(), score);
        }
        Ok(ExternalScores { scores })
    }

    pub fn predict(&self, account: &str) -> Result<bool, EvalError> {
        self.scores.get(account).map(|&s| s >= 0.5).ok_or_else(|| EvalError::MissingScore(account.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Classifier {
    Logreg(LogRegParams),
    ExternalScores(ExternalScores),
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier::Logreg(LogRegParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_repeats: usize,
    pub n_folds: usize,
    pub seed: u64,
    pub classifier: Classifier,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_repeats: 5, n_folds: 5, seed: 0, classifier: Classifier::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub repeat: usize,
    pub fold: usize,
    pub n_test: usize,
    pub micro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub seed: u64,
    pub n_repeats: usize,
    pub n_folds: usize,
    pub folds: Vec<FoldScore>,
    pub mean_f1: f64,
    /// Population standard deviation of the fold scores.
    pub std_f1: f64,
}

impl EvalReport {
    pub fn from_folds(config_hash: String, seed: u64, n_repeats: usize, n_folds: usize, folds: Vec<FoldScore>) -> Self {
        let n = folds.len().max(1) as f64;
        let mean_f1 = folds.iter().map(|f| f.micro_f1).sum::<f64>() / n;
        let std_f1 = (folds.iter().map(|f| (f.micro_f1 - mean_f1).powi(2)).sum::<f64>() / n).sqrt();
        EvalReport { config_hash, seed, n_repeats, n_folds, folds, mean_f1, std_f1 }
    }
}

fn fold_seed(seed: u64, repeat: usize, fold: usize) -> u64 {
    seed ^ (repeat as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (fold as u64).wrapping_add(1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// `n_repeats` independent stratified shuffles, each split into `n_folds`
/// train/test partitions. Fold jobs run in parallel; each is single-threaded
/// and seeded from `(seed, repeat, fold)`, so the report is reproducible.
pub fn cross_validate(features: &FeatureMatrix, labels: &[bool], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    if features.n_rows() != labels.len() {
        return Err(EvalError::LengthMismatch { left: features.n_rows(), right: labels.len() });
    }
    if cfg.n_folds < 2 || cfg.n_repeats < 1 {
        return Err(EvalError::InvalidConfig(format!(
            "need n_folds >= 2 and n_repeats >= 1, got {} and {}",
            cfg.n_folds, cfg.n_repeats
        )));
    }
    for class in [true, false] {
        let have = labels.iter().filter(|&&l| l == class).count();
        if have < cfg.n_folds {
            return Err(EvalError::TooFewSamples { class, have, need: cfg.n_folds });
        }
    }
    if let Some(row) = features.rows().position(|r| r.iter().any(|x| !x.is_finite())) {
        return Err(EvalError::NonFinite { row });
    }

    let assignments: Vec<Vec<usize>> = (0..cfg.n_repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(fold_seed(cfg.seed, r, usize::MAX));
            stratified_folds(labels, cfg.n_folds, &mut rng)
        })
        .collect();
    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_repeats).flat_map(|r| (0..cfg.n_folds).map(move |f| (r, f))).collect();

    let folds = jobs
        .par_iter()
        .map(|&(repeat, fold)| {
            let fold_of = &assignments[repeat];
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == fold);
            let truth: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
            let predictions = match &cfg.classifier {
                Classifier::Logreg(params) => {
                    let train_rows: Vec<&[f64]> = train_idx.iter().map(|&i| features.row(i)).collect();
                    let train_labels: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
                    let test_rows: Vec<&[f64]> = test_idx.iter().map(|&i| features.row(i)).collect();
                    train_predict_logreg(&train_rows, &train_labels, &test_rows, params, fold_seed(cfg.seed, repeat, fold))?
                }
                Classifier::ExternalScores(scores) => test_idx
                    .iter()
                    .map(|&i| scores.predict(&features.accounts()[i]))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            Ok(FoldScore { repeat, fold, n_test: truth.len(), micro_f1: micro_f1(&predictions, &truth)? })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    Ok(EvalReport::from_folds(stable_hash(cfg), cfg.seed, cfg.n_repeats, cfg.n_folds, folds))
}
