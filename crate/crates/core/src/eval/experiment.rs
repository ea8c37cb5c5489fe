//! Feature-group ablation and attention head-count sweep. Every configuration
//! shares the split and the training seed; reports list published numbers
//! beside the synthetic ones.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Splits};
use super::metrics::ConfusionCounts;
use super::train::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::feat::{group_name, FeatureGroup};
use crate::nn::ModelParams;
use crate::scalar::Scalar;

pub const PAPER_SOURCE: &str = "paper, private dataset";
pub const HEAD_COUNTS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub source: String,
}

fn row(name: &str, [accuracy, precision, recall, f1]: [f64; 4]) -> ReferenceRow {
    ReferenceRow { name: name.into(), accuracy, precision, recall, f1, source: PAPER_SOURCE.into() }
}

pub fn head_reference() -> Vec<ReferenceRow> {
    vec![
        row("heads=1", [0.9627, 0.9518, 0.9763, 0.9639]),
        row("heads=2", [0.9645, 0.9638, 0.9668, 0.9653]),
        row("heads=4", [0.9628, 0.9592, 0.9682, 0.9637]),
    ]
}

pub fn ablation_reference() -> Vec<ReferenceRow> {
    vec![
        row("L", [0.9272, 0.9379, 0.9179, 0.9278]),
        row("L+M", [0.9298, 0.9333, 0.9288, 0.9310]),
        row("L+M+G", [0.9328, 0.9449, 0.9291, 0.9369]),
        row("L+M+G+P", [0.9645, 0.9638, 0.9668, 0.9653]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub name: String,
    pub groups: Vec<FeatureGroup>,
    pub n_heads: usize,
    pub param_count: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub counts: ConfusionCounts,
    pub test_loss: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub dataset_hash: String,
    pub split_seed: u64,
    pub train_seed: u64,
    pub split_sizes: [usize; 3],
    pub dtype: String,
    pub results: Vec<ConfigResult>,
    pub reference: Vec<ReferenceRow>,
    pub wall_clock_s: f64,
}

impl ExperimentReport {
    pub fn result(&self, name: &str) -> Option<&ConfigResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

fn run_config<T: Scalar>(splits: &Splits, name: String, config: &TrainConfig) -> Result<(ConfigResult, ModelParams<T>)> {
    let start = Instant::now();
    let (params, report) = train::<T>(splits, config)?;
    let m = report.test.metrics;
    log::info!("{name}: accuracy {:.4} after {} epochs", m.accuracy, report.epochs_run);
    let result = ConfigResult {
        name,
        groups: config.groups.clone(),
        n_heads: config.model.n_heads,
        param_count: params.param_count(),
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        counts: report.test.counts,
        test_loss: report.test.loss,
        epochs_run: report.epochs_run,
        best_epoch: report.best_epoch,
        best_val_loss: report.best_val_loss,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((result, params))
}

#[allow(clippy::too_many_arguments)]
fn report(
    experiment: &str,
    data: &Dataset,
    splits: &Splits,
    base: &TrainConfig,
    results: Vec<ConfigResult>,
    reference: Vec<ReferenceRow>,
    start: Instant,
    dtype: &str,
) -> ExperimentReport {
    ExperimentReport {
        experiment: experiment.into(),
        dataset_hash: data.hash(),
        split_seed: base.split_seed,
        train_seed: base.seed,
        split_sizes: splits.sizes(),
        dtype: dtype.into(),
        results,
        reference,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

/// Trains the incremental prefixes of `groups` (taken in L, M, G, P order):
/// for all four that is L, L+M, L+M+G, L+M+G+P.
pub fn ablation<T: Scalar>(data: &Dataset, groups: &[FeatureGroup], base: &TrainConfig) -> Result<ExperimentReport> {
    ablation_models::<T>(data, groups, base).map(|(r, _)| r)
}

/// [`ablation`] that also returns the trained parameters, one per configuration.
pub fn ablation_models<T: Scalar>(
    data: &Dataset,
    groups: &[FeatureGroup],
    base: &TrainConfig,
) -> Result<(ExperimentReport, Vec<ModelParams<T>>)> {
    let ordered: Vec<FeatureGroup> = FeatureGroup::ALL.into_iter().filter(|g| groups.contains(g)).collect();
    if ordered.is_empty() {
        return Err(Error::EmptyGroupSet);
    }
    let start = Instant::now();
    let splits = super::dataset::split_by_track(data, base.split_seed)?;
    let mut results = Vec::new();
    let mut models = Vec::new();
    for k in 1..=ordered.len() {
        let keep = ordered[..k].to_vec();
        let cfg = TrainConfig { groups: keep.clone(), ..base.clone() };
        let (r, m) = run_config::<T>(&splits, group_name(&keep), &cfg)?;
        results.push(r);
        models.push(m);
    }
    Ok((report("ablation", data, &splits, base, results, ablation_reference(), start, T::DTYPE), models))
}

/// Trains one model per head count with everything else fixed.
pub fn head_sweep<T: Scalar>(data: &Dataset, heads: &[usize], base: &TrainConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let splits = super::dataset::split_by_track(data, base.split_seed)?;
    let mut results = Vec::new();
    for &h in heads {
        let cfg = TrainConfig { model: base.model.clone().with_heads(h), ..base.clone() };
        results.push(run_config::<T>(&splits, format!("heads={h}"), &cfg)?.0);
    }
    Ok(report("head_sweep", data, &splits, base, results, head_reference(), start, T::DTYPE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::dataset::Sample;
    use crate::feat::{FeatureWindow, StepFeatures, FEATURE_DIM, WINDOW_STEPS};
    use crate::geom::Crosswalk;
    use crate::nn::ModelConfig;

    fn data() -> Dataset {
        let samples = (0..20)
            .map(|v| {
                let label = if v % 2 == 0 { Crosswalk::A } else { Crosswalk::B };
                let mut s = [0.0; FEATURE_DIM];
                s[0] = 0.3;
                s[12] = label.as_target() * 2.0 - 1.0;
                Sample { vru: v, label, window: FeatureWindow { track_id: v as u64, end_frame_idx: 0, steps: [StepFeatures(s); WINDOW_STEPS] } }
            })
            .collect();
        Dataset::new(samples)
    }

    fn base() -> TrainConfig {
        TrainConfig {
            model: ModelConfig { d_h: 8, n_heads: 1, d_ff: 8, head_hidden: 4, dropout: 0.0, ..ModelConfig::default() },
            epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn ablation_runs_prefixes() {
        let r = ablation::<f64>(&data(), &FeatureGroup::ALL, &base()).unwrap();
        let names: Vec<_> = r.results.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["L", "L+M", "L+M+G", "L+M+G+P"]);
        assert_eq!(r.reference.len(), 4);
        assert!(r.reference.iter().all(|row| row.source == PAPER_SOURCE));
        let sub = ablation::<f64>(&data(), &[FeatureGroup::Pose, FeatureGroup::Location], &base()).unwrap();
        let names: Vec<_> = sub.results.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["L", "L+P"]);
    }

    #[test]
    fn empty_group_set_is_error() {
        assert!(matches!(ablation::<f64>(&data(), &[], &base()), Err(Error::EmptyGroupSet)));
    }

    #[test]
    fn head_counts_share_parameter_count() {
        let r = head_sweep::<f64>(&data(), &HEAD_COUNTS, &base()).unwrap();
        assert_eq!(r.results.len(), 3);
        let n = r.results[0].param_count;
        assert!(r.results.iter().all(|c| c.param_count == n));
        let two = r.reference.iter().find(|row| row.name == "heads=2").unwrap();
        assert_eq!([two.accuracy, two.precision, two.recall, two.f1], [0.9645, 0.9638, 0.9668, 0.9653]);
        assert_eq!(two.source, "paper, private dataset");
    }
}
