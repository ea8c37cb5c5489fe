//! Training, metrics and the head-count and feature-group experiments.

pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod train;

pub use dataset::{split_by_track, BirthMatcher, Dataset, Sample, Splits};
pub use experiment::{ablation, ablation_models, head_sweep, ConfigResult, ExperimentReport, ReferenceRow};
pub use metrics::{metrics, ConfusionCounts, Metrics};
pub use train::{evaluate, train, EpochLog, Evaluation, TrainConfig, TrainReport};
