//! End-to-end runs: ingest → manual features → metapaths → filter and
//! aggregate → cross-validated evaluation, with every stage's output
//! written to an output directory.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{self, AugmentedFeatures, CombineMode, PatternSet, TopKConfig};
use crate::eval::{self, Classifier, EvalConfig, EvalReport, ExternalScores, LogRegParams};
use crate::features::{self, FeatureMatrix};
use crate::graph_store::{self, GraphStats, HeterogeneousGraph, LabelSet, NodeTypeSource, TypeTable};
use crate::metapath::{self, MetapathStats, SuperMetapath, TimeMode};
use crate::synth::{self, SynthConfig};

pub const GRAPH_STATS_FILE: &str = "graph_stats.json";
pub const METAPATH_STATS_FILE: &str = "metapath_stats.csv";
pub const SUPERS_FILE: &str = "supers.csv";
pub const AUGMENTED_FILE: &str = "augmented_features.csv";
pub const RAW_FEATURES_FILE: &str = "features.csv";
pub const REPORT_FILE: &str = "eval_report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Features,
    Metapaths,
    Aggregate,
    Evaluate,
    Output,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 3,
            Stage::Features => 4,
            Stage::Metapaths => 5,
            Stage::Aggregate => 6,
            Stage::Evaluate => 7,
            Stage::Output => 8,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Metapaths => "metapaths",
            Stage::Aggregate => "aggregate",
            Stage::Evaluate => "evaluate",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source:#}")]
pub struct PipelineError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<anyhow::Error>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError { stage, source: e.into() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub n_repeats: usize,
    pub n_folds: usize,
    /// `account,score` CSV; replaces the built-in classifier when set.
    pub scores: Option<PathBuf>,
    pub logreg: LogRegParams,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { n_repeats: 5, n_folds: 5, scores: None, logreg: LogRegParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub edges: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Generate the input instead of reading files.
    pub synth: Option<SynthConfig>,
    pub pattern: PatternSet,
    pub time_mode: TimeMode,
    pub k_percent: f64,
    pub combine_mode: CombineMode,
    pub use_refinement: bool,
    pub use_filtering: bool,
    /// Evaluate manual features alone and skip every metapath stage.
    pub raw_only: bool,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
    /// Seeds negative sampling and cross-validation.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            edges: None,
            types: None,
            labels: None,
            synth: None,
            pattern: PatternSet::P2,
            time_mode: TimeMode::TimeAware,
            k_percent: 10.0,
            combine_mode: CombineMode::Replace,
            use_refinement: true,
            use_filtering: true,
            raw_only: false,
            eval: EvalSettings::default(),
            output_dir: PathBuf::from("tmfaug-out"),
            seed: 0,
        }
    }
}

/// The fields that change results. Settings a run ignores (K without
/// filtering, every metapath knob in raw-only mode) are blanked so they do
/// not perturb the hash; output location and thread count never enter it.
#[derive(Serialize)]
struct SemanticView<'a> {
    edges: Option<&'a Path>,
    types: Option<&'a Path>,
    labels: Option<&'a Path>,
    synth: Option<&'a SynthConfig>,
    raw_only: bool,
    pattern: Option<PatternSet>,
    time_mode: Option<TimeMode>,
    k_percent: Option<f64>,
    combine_mode: Option<CombineMode>,
    use_refinement: Option<bool>,
    n_repeats: usize,
    n_folds: usize,
    scores: Option<&'a Path>,
    logreg: Option<&'a LogRegParams>,
    seed: u64,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match (&self.synth, &self.edges) {
            (Some(_), Some(_)) => anyhow::bail!("give either `synth` or `edges`, not both"),
            (None, None) => anyhow::bail!("no input: set `edges` (and `labels`) or `synth`"),
            (None, Some(_)) if self.labels.is_none() => anyhow::bail!("`labels` is required with `edges`"),
            _ => {}
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if self.use_filtering && !self.raw_only {
            TopKConfig::new(self.k_percent)?;
        }
        if self.eval.n_folds < 2 || self.eval.n_repeats < 1 {
            anyhow::bail!("need n_folds >= 2 and n_repeats >= 1");
        }
        Ok(())
    }

    pub fn top_k(&self) -> anyhow::Result<TopKConfig> {
        if self.use_filtering {
            Ok(TopKConfig::new(self.k_percent)?)
        } else {
            Ok(TopKConfig::keep_all())
        }
    }

    pub fn config_hash(&self) -> String {
        let aug = !self.raw_only;
        let view = SemanticView {
            edges: self.edges.as_deref(),
            types: self.types.as_deref(),
            labels: self.labels.as_deref(),
            synth: self.synth.as_ref(),
            raw_only: self.raw_only,
            pattern: aug.then_some(self.pattern),
            time_mode: aug.then_some(self.time_mode),
            k_percent: (aug && self.use_filtering).then_some(self.k_percent),
            combine_mode: aug.then_some(self.combine_mode),
            use_refinement: aug.then_some(self.use_refinement),
            n_repeats: self.eval.n_repeats,
            n_folds: self.eval.n_folds,
            scores: self.eval.scores.as_deref(),
            logreg: self.eval.scores.is_none().then_some(&self.eval.logreg),
            seed: self.seed,
        };
        eval::stable_hash(&view)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogeneousStats {
    pub n_nodes: usize,
    pub n_edges: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatsArtifact {
    pub heterogeneous: GraphStats,
    pub homogeneous: HomogeneousStats,
}

pub fn stats_artifact(g: &HeterogeneousGraph, labels: &LabelSet) -> StatsArtifact {
    let hom = graph_store::project_homogeneous(g);
    StatsArtifact {
        heterogeneous: graph_store::stats(g, labels),
        homogeneous: HomogeneousStats { n_nodes: hom.accounts.len(), n_edges: hom.num_edges() },
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub artifacts: Vec<PathBuf>,
    pub graph_stats: GraphStats,
    pub metapath_stats: Option<MetapathStats>,
    pub report: EvalReport,
}

/// Reads the edge/type/label files named in `cfg`, or generates them.
pub fn load_input(cfg: &PipelineConfig) -> anyhow::Result<(HeterogeneousGraph, LabelSet)> {
    if let Some(s) = &cfg.synth {
        return Ok(synth::generate(s)?);
    }
    let edges_path = cfg.edges.as_ref().context("no edge file configured")?;
    let types = match &cfg.types {
        Some(p) => NodeTypeSource::Explicit(
            TypeTable::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)
                .with_context(|| format!("reading {}", p.display()))?,
        ),
        None => NodeTypeSource::Infer,
    };
    let g = graph_store::ingest_edges(
        File::open(edges_path).with_context(|| format!("opening {}", edges_path.display()))?,
        types,
    )
    .with_context(|| format!("reading {}", edges_path.display()))?;
    let labels = match &cfg.labels {
        Some(p) => LabelSet::from_reader(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
            p.display().to_string(),
        )?,
        None => LabelSet::default(),
    };
    labels.validate(&g)?;
    Ok((g, labels))
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn create(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn timed<T>(stage: Stage, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    let start = Instant::now();
    let out = f();
    log::info!("stage {stage}: {:.3}s", start.elapsed().as_secs_f64());
    out
}

/// Runs every stage and writes the artifacts into `cfg.output_dir`. On
/// failure, artifacts written by this run are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate().at(Stage::Config)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))
        .at(Stage::Output)?;
    let mut artifacts = Artifacts { dir: cfg.output_dir.clone(), written: Vec::new() };
    match run_stages(cfg, &mut artifacts) {
        Ok((graph_stats, metapath_stats, report)) => {
            Ok(RunSummary { artifacts: artifacts.written, graph_stats, metapath_stats, report })
        }
        Err(e) => {
            artifacts.discard();
            Err(e)
        }
    }
}

fn run_stages(
    cfg: &PipelineConfig,
    out: &mut Artifacts,
) -> Result<(GraphStats, Option<MetapathStats>, EvalReport), PipelineError> {
    let (g, labels) = timed(Stage::Ingest, || load_input(cfg).at(Stage::Ingest))?;
    let graph_stats = stats_artifact(&g, &labels);
    out.create(GRAPH_STATS_FILE, |w| {
        serde_json::to_writer_pretty(&mut *w, &graph_stats)?;
        writeln!(w)?;
        Ok(())
    })
    .at(Stage::Output)?;

    let (sample, base) = timed(Stage::Features, || {
        let sample = eval::sample_negatives(&g, &labels, cfg.seed).at(Stage::Features)?;
        Ok((sample, features::all_features(&g)))
    })?;
    let accounts: Vec<String> = sample.iter().map(|(a, _)| a.clone()).collect();
    let truth: Vec<bool> = sample.iter().map(|(_, y)| *y).collect();

    let mut metapath_stats = None;
    let matrix: FeatureMatrix = if cfg.raw_only {
        let raw = base.select(&accounts).at(Stage::Features)?;
        out.create(RAW_FEATURES_FILE, |w| Ok(raw.write_csv(w, Some("features=manual"))?)).at(Stage::Output)?;
        raw
    } else {
        let supers: Vec<SuperMetapath> = timed(Stage::Metapaths, || {
            Ok(cfg
                .pattern
                .patterns()
                .iter()
                .flat_map(|&p| metapath::enumerate(&g, p, cfg.time_mode))
                .collect())
        })?;
        let mstats = metapath::metapath_stats(&supers);
        out.create(METAPATH_STATS_FILE, |w| Ok(mstats.write_csv(w)?)).at(Stage::Output)?;
        out.create(SUPERS_FILE, |w| Ok(metapath::write_dump(&g, &supers, w)?)).at(Stage::Output)?;
        metapath_stats = Some(mstats);

        let combined = timed(Stage::Aggregate, || {
            let top_k = cfg.top_k().at(Stage::Config)?;
            let retained = aggregate::top_k_filter(&supers, &top_k, cfg.use_refinement);
            let mut aug = AugmentedFeatures::default();
            for &p in cfg.pattern.patterns() {
                let normalized = aggregate::normalize(&retained, p);
                aug.insert(aggregate::aggregate(&g, &normalized, &base, p).at(Stage::Aggregate)?);
            }
            let ca_accounts: Vec<String> =
                g.node_ids().filter(|&v| g.is_ca(v)).map(|v| g.account(v).to_string()).collect();
            let ca_base = base.select(&ca_accounts).at(Stage::Aggregate)?;
            aggregate::combine(&ca_base, &aug, cfg.combine_mode, cfg.pattern).at(Stage::Aggregate)
        })?;
        let comment = format!(
            "pattern={} mode={} k_percent={} time_mode={} use_refinement={} use_filtering={}",
            cfg.pattern,
            cfg.combine_mode,
            cfg.top_k().at(Stage::Config)?.k_percent(),
            cfg.time_mode,
            cfg.use_refinement,
            cfg.use_filtering
        );
        out.create(AUGMENTED_FILE, |w| Ok(combined.write_csv(w, Some(&comment))?)).at(Stage::Output)?;
        combined.select(&accounts).at(Stage::Aggregate)?
    };

    let report = timed(Stage::Evaluate, || {
        let classifier = match &cfg.eval.scores {
            Some(p) => Classifier::ExternalScores(
                ExternalScores::from_reader(File::open(p).with_context(|| format!("opening {}", p.display())).at(Stage::Evaluate)?)
                    .at(Stage::Evaluate)?,
            ),
            None => Classifier::Logreg(cfg.eval.logreg.clone()),
        };
        let eval_cfg = EvalConfig { n_repeats: cfg.eval.n_repeats, n_folds: cfg.eval.n_folds, seed: cfg.seed, classifier };
        let mut report = eval::cross_validate(&matrix, &truth, &eval_cfg).at(Stage::Evaluate)?;
        report.config_hash = cfg.config_hash();
        Ok(report)
    })?;
    out.create(REPORT_FILE, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })
    .at(Stage::Output)?;

    Ok((graph_stats.heterogeneous, metapath_stats, report))
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("reports are not comparable: {0}")]
    Incompatible(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainRow {
    pub repeat: usize,
    pub fold: usize,
    pub f1_a: f64,
    pub f1_b: f64,
    pub gain: f64,
}

/// Relative improvement `(b − a) / a` per fold and on the mean.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainTable {
    pub rows: Vec<GainRow>,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_gain: f64,
}

pub fn relative_gain(a: f64, b: f64) -> f64 {
    (b - a) / a
}

/// Signed percentage with two decimals, e.g. `+5.00%`.
pub fn format_gain(gain: f64) -> String {
    if gain.is_finite() {
        format!("{:+.2}%", gain * 100.0)
    } else {
        "n/a".to_string()
    }
}

pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<GainTable, CompareError> {
    if a.seed != b.seed {
        return Err(CompareError::Incompatible(format!("seeds differ ({} vs {})", a.seed, b.seed)));
    }
    if (a.n_repeats, a.n_folds) != (b.n_repeats, b.n_folds) || a.folds.len() != b.folds.len() {
        return Err(CompareError::Incompatible("fold structure differs".into()));
    }
    let mut rows = Vec::with_capacity(a.folds.len());
    for (fa, fb) in a.folds.iter().zip(&b.folds) {
        if (fa.repeat, fa.fold, fa.n_test) != (fb.repeat, fb.fold, fb.n_test) {
            return Err(CompareError::Incompatible(format!("fold ({}, {}) does not line up", fa.repeat, fa.fold)));
        }
        rows.push(GainRow {
            repeat: fa.repeat,
            fold: fa.fold,
            f1_a: fa.micro_f1,
            f1_b: fb.micro_f1,
            gain: relative_gain(fa.micro_f1, fb.micro_f1),
        });
    }
    if a.mean_f1 <= 0.0 {
        return Err(CompareError::Incompatible("baseline mean F1 is zero".into()));
    }
    Ok(GainTable { rows, mean_a: a.mean_f1, mean_b: b.mean_f1, mean_gain: relative_gain(a.mean_f1, b.mean_f1) })
}

impl fmt::Display for GainTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "repeat,fold,f1_a,f1_b,gain")?;
        for r in &self.rows {
            writeln!(f, "{},{},{:.4},{:.4},{}", r.repeat, r.fold, r.f1_a, r.f1_b, format_gain(r.gain))?;
        }
        writeln!(f, "mean,,{:.4},{:.4},{}", self.mean_a, self.mean_b, format_gain(self.mean_gain))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::FoldScore;

    fn report(scores: &[f64], seed: u64) -> EvalReport {
        let folds = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| FoldScore { repeat: 0, fold: i, n_test: 10, micro_f1: s })
            .collect();
        EvalReport::from_folds("x".into(), seed, 1, scores.len(), folds)
    }

    #[test]
    fn gain_examples() {
        assert_eq!(format_gain(relative_gain(0.80, 0.84)), "+5.00%");
        assert_eq!(format_gain(relative_gain(0.80, 0.80)), "+0.00%");
        assert_eq!(format_gain(relative_gain(0.80, 0.76)), "-5.00%");
    }

    #[test]
    fn compare_identical_and_improved() {
        let a = report(&[0.8, 0.8], 1);
        let t = compare_runs(&a, &a).unwrap();
        assert_eq!(t.mean_gain, 0.0);
        let b = report(&[0.84, 0.84], 1);
        let t = compare_runs(&a, &b).unwrap();
        assert!((t.mean_gain - 0.05).abs() < 1e-12);
        assert!(t.to_string().ends_with("mean,,0.8000,0.8400,+5.00%\n"));
    }

    #[test]
    fn compare_rejects_mismatch() {
        let a = report(&[0.8, 0.8], 1);
        assert!(compare_runs(&a, &report(&[0.8, 0.8], 2)).is_err());
        assert!(compare_runs(&a, &report(&[0.8, 0.8, 0.8], 1)).is_err());
    }

    #[test]
    fn config_hash_tracks_semantics() {
        let base = PipelineConfig { synth: Some(SynthConfig::default()), ..Default::default() };
        let h = base.config_hash();
        assert_eq!(h, PipelineConfig { output_dir: "elsewhere".into(), ..base.clone() }.config_hash());
        assert_ne!(h, PipelineConfig { k_percent: 20.0, ..base.clone() }.config_hash());
        assert_ne!(h, PipelineConfig { time_mode: TimeMode::Timeless, ..base.clone() }.config_hash());
        assert_ne!(h, PipelineConfig { seed: 9, ..base.clone() }.config_hash());

        let unfiltered = PipelineConfig { use_filtering: false, ..base.clone() };
        assert_ne!(h, unfiltered.config_hash());
        assert_eq!(
            unfiltered.config_hash(),
            PipelineConfig { k_percent: 77.0, ..unfiltered.clone() }.config_hash()
        );
        let raw = PipelineConfig { raw_only: true, ..base.clone() };
        assert_eq!(raw.config_hash(), PipelineConfig { pattern: PatternSet::P1, ..raw.clone() }.config_hash());
    }

    #[test]
    fn validate_inputs() {
        assert!(PipelineConfig::default().validate().is_err());
        let both = PipelineConfig {
            synth: Some(SynthConfig::default()),
            edges: Some("e.csv".into()),
            ..Default::default()
        };
        assert!(both.validate().is_err());
        let no_labels = PipelineConfig { edges: Some("e.csv".into()), ..Default::default() };
        assert!(no_labels.validate().is_err());
        let bad_k = PipelineConfig { synth: Some(SynthConfig::default()), k_percent: 0.0, ..Default::default() };
        assert!(bad_k.validate().is_err());
    }

    #[test]
    fn toml_config() {
        let cfg = PipelineConfig::from_toml(
            "pattern = \"p1p2\"\ntime_mode = \"timeless\"\nk_percent = 5.0\n[synth]\nn_eoa = 300\n[eval]\nn_folds = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.pattern, PatternSet::P1p2);
        assert_eq!(cfg.time_mode, TimeMode::Timeless);
        assert_eq!(cfg.synth.as_ref().unwrap().n_eoa, 300);
        assert_eq!(cfg.synth.as_ref().unwrap().n_ponzi_ca, 100);
        assert_eq!(cfg.eval.n_folds, 3);
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
    }
}
