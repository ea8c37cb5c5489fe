//! Mini-batch training with AdamW, global-norm clipping and the plateau
//! schedule; keeps the parameters with the best validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Sample, Splits};
use super::metrics::{metrics, ConfusionCounts, Metrics};
use crate::error::{Error, Result};
use crate::feat::FeatureGroup;
use crate::geom::Crosswalk;
use crate::nn::{adamw_step, clip_gradients, AdamWConfig, AdamWState, Mode, ModelConfig, ModelParams, PlateauSchedule, Tensor2};
use crate::scalar::Scalar;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Seed for the track-grouped split.
    pub split_seed: u64,
    /// Stop after this many epochs without a new best validation loss.
    pub early_stop: Option<usize>,
    /// Feature groups left visible to the model; the rest are zeroed.
    pub groups: Vec<FeatureGroup>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optimizer: AdamWConfig::default(),
            epochs: 250,
            batch_size: 64,
            clip_norm: 1.0,
            seed: 0,
            split_seed: 0,
            early_stop: None,
            groups: FeatureGroup::ALL.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub counts: ConfusionCounts,
    pub metrics: Metrics<f64>,
}

/// Everything about a run except timing, so equal seeds give equal reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochLog>,
    pub test: Evaluation,
}

impl TrainReport {
    /// Learning rate used in each epoch.
    pub fn lr_trace(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.lr).collect()
    }
}

fn batch_inputs<T: Scalar>(samples: &[&Sample]) -> (Vec<Tensor2<T>>, Vec<T>) {
    let xs = samples.iter().map(|s| s.window.to_tensor()).collect();
    let ys = samples.iter().map(|s| T::c(s.label.as_target())).collect();
    (xs, ys)
}

/// Mean loss and confusion counts in inference mode. Predicts B when `p_B >= 0.5`.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut counts = ConfusionCounts::default();
    for chunk in samples.chunks(EVAL_CHUNK) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (xs, ys) = batch_inputs::<T>(&refs);
        let (probs, cache) = params.forward(&xs, Mode::Infer)?;
        loss += ModelParams::loss(&cache, &ys).f64() * chunk.len() as f64;
        for (s, p) in chunk.iter().zip(probs) {
            counts.record(s.label == Crosswalk::B, p.f64() >= 0.5);
        }
    }
    Ok(Evaluation { loss: loss / samples.len() as f64, counts, metrics: metrics(&counts)? })
}

/// Trains on `splits.train`, schedules on `splits.val`, reports on `splits.test`.
/// Windows are masked to `config.groups` here.
pub fn train<T: Scalar>(splits: &Splits, config: &TrainConfig) -> Result<(ModelParams<T>, TrainReport)> {
    config.validate()?;
    let splits = if config.groups.len() == FeatureGroup::ALL.len() { splits.clone() } else { splits.masked(&config.groups) };
    if splits.train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if splits.val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    if splits.test.is_empty() {
        return Err(Error::EmptySplit("test"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::<T>::init(config.model.clone(), &mut rng)?;
    let mut state = AdamWState::new(&params);
    let mut schedule = PlateauSchedule::new(config.optimizer.lr);
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..splits.train.len()).collect();

    for epoch in 1..=config.epochs {
        let lr = schedule.lr;
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &splits.train[i]).collect();
            let (xs, ys) = batch_inputs::<T>(&refs);
            let (_, cache) = params.forward(&xs, Mode::Train(&mut rng))?;
            let (loss, mut grads) = params.backward(&cache, &ys)?;
            clip_gradients(&mut grads, config.clip_norm);
            adamw_step(&mut params, &grads, &mut state, &config.optimizer, lr)?;
            train_loss += loss.f64() * idx.len() as f64;
        }
        train_loss /= splits.train.len() as f64;
        let val_loss = evaluate(&params, &splits.val)?.loss;
        schedule.observe(val_loss);
        log::info!("epoch {epoch}: lr {lr:.3e} train {train_loss:.5} val {val_loss:.5}");
        history.push(EpochLog { epoch, lr, train_loss, val_loss });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = params.clone();
        }
        if let Some(patience) = config.early_stop {
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    let test = evaluate(&best, &splits.test)?;
    let report = TrainReport { epochs_run: history.len(), best_epoch, best_val_loss: best_loss, history, test };
    Ok((best, report))
}
