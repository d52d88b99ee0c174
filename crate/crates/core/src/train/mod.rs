//! Loss, optimizer and the epoch loop.

mod adam;
mod loss;
mod report;

use std::time::Instant;

use rand::seq::SliceRandom;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::nll_loss;
pub use report::{detect_saturation, EpochMetrics, TrainingReport, REPORT_HEADER};

use crate::autodiff::Graph;
use crate::data::{AugmentPolicy, ChannelStats, Dataset};
use crate::error::{Error, Result};
use crate::eval::predict_log_probs;
use crate::layers::Mode;
use crate::model::{apply_freeze_policy, FreezePolicy, Model};
use crate::rng::{keyed_rng, DOMAIN_SHUFFLE};

pub const DEFAULT_EPOCHS: usize = 25;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const SATURATION_DELTA: f64 = 0.001;
pub const SATURATION_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Applied before the first step; `None` keeps the model's current flags.
    pub freeze: Option<FreezePolicy>,
    pub augment: Option<AugmentPolicy>,
    /// Batch-norm behavior during update steps.
    pub bn_mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            adam: AdamConfig::default(),
            seed: 0,
            freeze: None,
            augment: None,
            bn_mode: Mode::Train,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "epochs and batch size must be positive, got {} and {}",
                self.epochs, self.batch_size
            )));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.adam.learning_rate)));
        }
        self.adam.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }
}

/// Seeded permutation for one epoch, cut into batches. A trailing batch of
/// one sample is merged into the previous batch so batch norm always sees
/// at least two samples.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed_rng(seed, &[DOMAIN_SHUFFLE, epoch as u64]));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap_or_default();
        if let Some(prev) = batches.last_mut() {
            prev.extend(last);
        }
    }
    batches
}

/// Mean NLL and accuracy in eval mode without augmentation.
pub fn measure(model: &Model, data: &Dataset, stats: &ChannelStats, batch_size: usize) -> Result<(f64, f64)> {
    let log_probs = predict_log_probs(model, data, stats, batch_size)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, s) in log_probs.iter().zip(&data.samples) {
        loss -= row[s.label];
        correct += usize::from(crate::eval::argmax(row) == s.label);
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

fn check_dataset(model: &Model, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.size != model.input_size() {
        return Err(Error::SizeMismatch { expected: model.input_size(), actual: data.size });
    }
    if let Some(s) = data.samples.iter().find(|s| s.label >= model.num_classes()) {
        return Err(Error::TargetOutOfRange { target: s.label, classes: model.num_classes() });
    }
    Ok(())
}

/// Runs the configured number of update steps without evaluation; used for
/// short fine-tuning runs and tests.
pub fn train_steps(model: &mut Model, data: &Dataset, stats: &ChannelStats, config: &TrainConfig, steps: usize) -> Result<AdamState> {
    config.validate()?;
    check_dataset(model, data)?;
    if let Some(policy) = config.freeze {
        apply_freeze_policy(model, policy);
    }
    let mut state = AdamState::new(model.params());
    let mut done = 0;
    'outer: for epoch in 0.. {
        for (b, idx) in epoch_batches(data.len(), config.batch_size, config.seed, epoch).iter().enumerate() {
            if done == steps {
                break 'outer;
            }
            step(model, data, stats, config, &mut state, epoch, b, idx)?;
            done += 1;
        }
    }
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn step(
    model: &mut Model,
    data: &Dataset,
    stats: &ChannelStats,
    config: &TrainConfig,
    state: &mut AdamState,
    epoch: usize,
    batch: usize,
    indices: &[usize],
) -> Result<f64> {
    let (x, targets) = data.batch(indices, stats, config.augment.as_ref().map(|p| (p, epoch)))?;
    let mut g = Graph::new();
    let input = g.constant(x);
    let pass = model.forward(&mut g, input, config.bn_mode)?;
    let loss = nll_loss(&mut g, pass.output, &targets)?;
    let value = g.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: batch + 1 });
    }
    let grads = g.backward(loss)?;
    model.zero_grads();
    model.accumulate_grads(&pass, &grads)?;
    adam_step(model.params_mut(), state, &config.adam)?;
    Ok(value)
}

pub fn train(model: &mut Model, train_set: &Dataset, val_set: &Dataset, stats: &ChannelStats, config: &TrainConfig) -> Result<TrainingReport> {
    train_with_progress(model, train_set, val_set, stats, config, |_| {})
}

/// Trains in place. `on_epoch` sees each epoch's metrics as they are produced.
pub fn train_with_progress(
    model: &mut Model,
    train_set: &Dataset,
    val_set: &Dataset,
    stats: &ChannelStats,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainingReport> {
    config.validate()?;
    check_dataset(model, train_set)?;
    check_dataset(model, val_set)?;
    if let Some(policy) = config.freeze {
        apply_freeze_policy(model, policy);
    }
    model.channel_stats = Some(*stats);
    let mut state = AdamState::new(model.params());
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let start = Instant::now();
        for (b, idx) in epoch_batches(train_set.len(), config.batch_size, config.seed, epoch).iter().enumerate() {
            step(model, train_set, stats, config, &mut state, epoch, b, idx)?;
        }
        let (train_loss, train_accuracy) = measure(model, train_set, stats, config.batch_size)?;
        let (val_loss, val_accuracy) = measure(model, val_set, stats, config.batch_size)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: 0 });
        }
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            train_accuracy,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        epochs.push(metrics);
    }
    let val: Vec<f64> = epochs.iter().map(|e| e.val_accuracy).collect();
    Ok(TrainingReport {
        config: config.clone(),
        saturation_epoch: detect_saturation(&val, SATURATION_DELTA, SATURATION_PATIENCE),
        epochs,
    })
}
