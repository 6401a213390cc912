//! Augments contract-account features with aggregates over time-ordered
//! metapaths, for classifying Ponzi-scheme contracts.
//!
//! Stages: [`graph_store`] ingests a typed temporal multigraph,
//! [`features`] computes per-account manual features, [`metapath`] counts
//! temporally ordered metapath instances, [`aggregate`] filters and folds
//! them into augmented features, and [`eval`] cross-validates a classifier.
//! [`pipeline`] wires the stages together and [`synth`] generates labelled
//! test graphs.

pub mod aggregate;
pub mod eval;
pub mod features;
pub mod graph_store;
pub mod metapath;
pub mod pipeline;
pub mod synth;

pub use aggregate::{CombineMode, PatternSet, TopKConfig};
pub use features::{FeatureMatrix, FeatureVector};
pub use graph_store::{HeterogeneousGraph, LabelSet, NodeId};
pub use metapath::{Pattern, RefinedClass, SuperMetapath, TimeMode};
pub use pipeline::{run_pipeline, PipelineConfig};
