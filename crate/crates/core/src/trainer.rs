//! Mini-batch training with augmentation policies.
//!
//! Each step evaluates the loss matrix for the current policy, reduces it to
//! per-entry weights and runs one backward pass. Expanded batches are laid
//! out sample-major: rows `i*(N+1)..(i+1)*(N+1)` hold the versions of the
//! `i`-th sample, identity first.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::model::{cache_losses, rmsprop_step, Mlp, Params, RmsProp, RmsPropConfig};
use crate::policy::{
    alpha_trim_entry_weights, rand_augment_pick, w_augment_entry_weights, w_augment_grad_omega, LossMatrix,
    PolicyConfig, PolicyKind, WeightVector,
};
use crate::rng::RngStream;
use crate::transforms::{self, TimeSeries, TransformId, TransformSpec};
use crate::{Error, Result};

// `transform` coordinates reserved for non-transform draws
const SHUFFLE_STREAM: u64 = u64::MAX;
const PICK_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub policy: PolicyConfig,
    /// Seed for per-epoch shuffling.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(policy: PolicyConfig, seed: u64) -> Self {
        Self {
            batch_size: 128,
            optimizer: RmsPropConfig::default(),
            max_epochs: 200,
            early_stop_patience: 10,
            plateau_patience: 50,
            plateau_factor: 0.5,
            policy,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |key: &str, msg: String| Err(Error::Config { key: key.into(), msg });
        if self.batch_size == 0 {
            return cfg("batch_size", "must be at least 1".into());
        }
        if self.early_stop_patience == 0 {
            return cfg("patience", "must be at least 1".into());
        }
        if self.plateau_patience == 0 {
            return cfg("plateau_patience", "must be at least 1".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return cfg("plateau_factor", format!("{} not in (0, 1)", self.plateau_factor));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return cfg("lr", format!("{} must be positive", o.lr));
        }
        if !(0.0..1.0).contains(&o.rho) || !(o.eps > 0.0) {
            return cfg("rho", "need 0 <= rho < 1 and eps > 0".into());
        }
        self.policy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
    pub forward_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub policy: PolicyKind,
    pub transforms: Vec<String>,
    pub epochs: Vec<EpochRecord>,
    /// Softmaxed W-Augment weights after every step.
    pub weight_trace: Vec<Vec<f64>>,
    /// α-trimmed: per epoch, how often each version was kept.
    pub selection_histogram: Vec<Vec<usize>>,
    /// RandAugment: per epoch, how often each transform was picked.
    pub pick_histogram: Vec<Vec<usize>>,
    pub steps: usize,
    pub forward_samples: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_epoch: usize,
    pub wall_clock_secs: f64,
    pub error: Option<String>,
}

impl TrainReport {
    fn new(policy: &PolicyConfig) -> Self {
        Self {
            policy: policy.kind,
            transforms: policy.transforms.iter().map(|t| t.id().name().to_string()).collect(),
            epochs: Vec::new(),
            weight_trace: Vec::new(),
            selection_histogram: Vec::new(),
            pick_histogram: Vec::new(),
            steps: 0,
            forward_samples: 0,
            best_epoch: 0,
            best_val_loss: f64::INFINITY,
            stop_epoch: 0,
            wall_clock_secs: 0.0,
            error: None,
        }
    }

    /// Copy with the timing field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport { wall_clock_secs: 0.0, ..self.clone() }
    }

    /// CSV rows `iteration,w_0,...,w_N`.
    pub fn write_weight_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.transforms.len();
        let header: Vec<String> =
            std::iter::once("iteration".to_string()).chain((0..n).map(|j| format!("w_{j}"))).collect();
        w.write_record(&header)?;
        for (it, row) in self.weight_trace.iter().enumerate() {
            let rec: Vec<String> =
                std::iter::once((it + 1).to_string()).chain(row.iter().map(|v| v.to_string())).collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV rows `epoch,transform_id,count` from the selection histogram.
    pub fn write_selection_histogram<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "transform_id", "count"])?;
        for (e, row) in self.selection_histogram.iter().enumerate() {
            for (name, count) in self.transforms.iter().zip(row) {
                w.write_record([(e + 1).to_string(), name.clone(), count.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub weights: WeightVector,
    pub report: TrainReport,
}

/// A failed run with whatever had been recorded up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("training aborted: {error}")]
pub struct TrainFailure {
    pub error: Error,
    pub report: Box<TrainReport>,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

/// What one optimizer step saw.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Policy objective before the update.
    pub loss: f64,
    pub forward_samples: usize,
    /// Correct predictions among the batch's reference rows (the identity
    /// column when expanded).
    pub correct: usize,
    pub selections: Option<Vec<Vec<usize>>>,
    pub pick: Option<usize>,
}

/// The stream used for version `transform` of dataset sample `sample`.
pub fn transform_stream(policy_seed: u64, epoch: usize, batch: usize, sample: usize, transform: usize) -> RngStream {
    RngStream::new(policy_seed)
        .epoch(epoch as u64)
        .batch(batch as u64)
        .sample(sample as u64)
        .transform(transform as u64)
}

fn apply_version(
    spec: &TransformSpec,
    x: &TimeSeries,
    policy_seed: u64,
    coords: (usize, usize, usize, usize),
) -> Result<Vec<f64>> {
    if spec.id() == TransformId::Identity {
        return Ok(x.values.clone());
    }
    let (epoch, batch, sample, j) = coords;
    Ok(transforms::apply(spec, x, &transform_stream(policy_seed, epoch, batch, sample, j))?.values)
}

/// All `N+1` versions of every batch item, sample-major. Items are
/// `(dataset index, sample)`; the index selects the random stream.
pub fn expand_batch(
    policy: &PolicyConfig,
    batch: &[(usize, &TimeSeries)],
    epoch: usize,
    batch_index: usize,
) -> Result<Vec<Vec<f64>>> {
    let per_sample: Vec<Vec<Vec<f64>>> = batch
        .par_iter()
        .map(|&(id, x)| {
            policy
                .transforms
                .iter()
                .enumerate()
                .map(|(j, spec)| apply_version(spec, x, policy.seed, (epoch, batch_index, id, j)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// The transform index RandAugment uses for a batch.
pub fn rand_augment_choice(policy: &PolicyConfig, epoch: usize, batch_index: usize) -> Result<usize> {
    let stream = RngStream::new(policy.seed)
        .epoch(epoch as u64)
        .batch(batch_index as u64)
        .transform(PICK_STREAM);
    rand_augment_pick(policy.transforms.len(), &stream)
}

/// Step-level training state: model, optimizer slots and policy weights.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    model: Mlp,
    optimizer: RmsProp,
    omega: WeightVector,
    omega_state: Vec<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: Mlp) -> Result<Self> {
        config.validate()?;
        let optimizer = RmsProp::new(config.optimizer, &model);
        let n = config.policy.transforms.len();
        Ok(Self { model, optimizer, omega: WeightVector::uniform(n), omega_state: vec![0.0; n], config })
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn weights(&self) -> &WeightVector {
        &self.omega
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.optimizer.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.optimizer.config.lr = lr;
    }

    fn restore(&mut self, params: Params, omega: WeightVector) {
        self.model.params = params;
        self.omega = omega;
    }

    /// One optimizer step on `batch`. On error nothing is modified.
    pub fn step(&mut self, batch: &[(usize, &TimeSeries)], epoch: usize, batch_index: usize) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(Error::shape("empty batch"));
        }
        let policy = &self.config.policy;
        let labels: Vec<usize> = batch.iter().map(|(_, x)| x.label).collect();
        let b = batch.len();
        match policy.kind {
            PolicyKind::None | PolicyKind::RandAugment => {
                let pick = match policy.kind {
                    PolicyKind::RandAugment => Some(rand_augment_choice(policy, epoch, batch_index)?),
                    _ => None,
                };
                let inputs: Vec<Vec<f64>> = match pick {
                    Some(j) => {
                        let spec = &policy.transforms[j];
                        batch
                            .par_iter()
                            .map(|&(id, x)| apply_version(spec, x, policy.seed, (epoch, batch_index, id, j)))
                            .collect::<Result<_>>()?
                    }
                    None => batch.iter().map(|(_, x)| x.values.clone()).collect(),
                };
                let cache = self.model.forward(&inputs)?;
                let losses = cache_losses(&cache, &labels)?;
                let weights = vec![1.0 / b as f64; b];
                let grads = self.model.backward(&cache, &labels, &weights)?;
                let correct = (0..b).filter(|&i| argmax(cache.probs_row(i)) == labels[i]).count();
                self.optimizer.step(&mut self.model.params, &grads)?;
                Ok(StepOutcome {
                    loss: losses.iter().sum::<f64>() / b as f64,
                    forward_samples: b,
                    correct,
                    selections: None,
                    pick,
                })
            }
            PolicyKind::WAugment | PolicyKind::AlphaTrimmed => {
                let cols = policy.transforms.len();
                let inputs = expand_batch(policy, batch, epoch, batch_index)?;
                let expanded_labels: Vec<usize> = labels.iter().flat_map(|&l| std::iter::repeat_n(l, cols)).collect();
                let cache = self.model.forward(&inputs)?;
                let losses = LossMatrix::new(b, cols, cache_losses(&cache, &expanded_labels)?)?;
                let correct = (0..b).filter(|&i| argmax(cache.probs_row(i * cols)) == labels[i]).count();
                let (weights, selections, omega_grad) = if policy.kind == PolicyKind::WAugment {
                    let w = w_augment_entry_weights(&losses, &self.omega)?;
                    let g = (!policy.freeze_weights).then(|| w_augment_grad_omega(&losses, &self.omega)).transpose()?;
                    (w, None, g)
                } else {
                    let (w, sel) = alpha_trim_entry_weights(&losses, policy.alpha)?;
                    (w, Some(sel), None)
                };
                let loss: f64 = weights.iter().zip(losses.as_slice()).map(|(w, l)| w * l).sum();
                let grads = self.model.backward(&cache, &expanded_labels, &weights)?;
                if let Some(g) = &omega_grad {
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numeric("non-finite policy-weight gradient; step aborted"));
                    }
                }
                self.optimizer.step(&mut self.model.params, &grads)?;
                if let Some(g) = omega_grad {
                    let RmsPropConfig { lr, rho, eps } = self.optimizer.config;
                    let mut logits = self.omega.logits.clone();
                    rmsprop_step(&mut logits, &g, &mut self.omega_state, lr, rho, eps)?;
                    self.omega = WeightVector::from_logits(logits)?;
                }
                Ok(StepOutcome { loss, forward_samples: b * cols, correct, selections, pick: None })
            }
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &p)| if p > best.1 { (j, p) } else { best })
        .0
}

fn check_inputs(model: &Mlp, train_set: &Dataset, val_set: &Dataset) -> Result<()> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::domain("train and validation sets must be nonempty"));
    }
    for ds in [train_set, val_set] {
        ds.validate()?;
        if ds.series_len() != model.input {
            return Err(Error::shape(format!(
                "{} has series length {}, model expects {}",
                ds.name,
                ds.series_len(),
                model.input
            )));
        }
        if ds.n_classes > model.classes {
            return Err(Error::shape(format!(
                "{} has {} classes, model outputs {}",
                ds.name, ds.n_classes, model.classes
            )));
        }
    }
    Ok(())
}

/// Train `model` under `config`, returning the best-validation-loss
/// parameters.
pub fn train(config: &TrainConfig, train_set: &Dataset, val_set: &Dataset, model: Mlp) -> Result<TrainOutcome, TrainFailure> {
    let started = Instant::now();
    let mut report = TrainReport::new(&config.policy);
    let fail = |error: Error, mut report: TrainReport| {
        report.error = Some(error.to_string());
        report.wall_clock_secs = started.elapsed().as_secs_f64();
        TrainFailure { error, report: Box::new(report) }
    };
    if let Err(e) = check_inputs(&model, train_set, val_set) {
        return Err(fail(e, report));
    }
    let mut trainer = match Trainer::new(config.clone(), model) {
        Ok(t) => t,
        Err(e) => return Err(fail(e, report)),
    };
    let cols = config.policy.transforms.len();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (trainer.model.params.clone(), trainer.omega.clone());
    let mut since_best = 0;
    let mut plateau_best = f64::INFINITY;
    let mut since_plateau_best = 0;

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut RngStream::new(config.seed).epoch(epoch as u64).transform(SHUFFLE_STREAM).rng());
        let mut selection = vec![0usize; cols];
        let mut picks = vec![0usize; cols];
        let (mut loss_sum, mut correct, mut forward) = (0.0, 0usize, 0usize);
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(usize, &TimeSeries)> = chunk.iter().map(|&i| (i, &train_set.samples[i])).collect();
            let outcome = match trainer.step(&batch, epoch, batch_index) {
                Ok(o) => o,
                Err(e) => {
                    report.stop_epoch = epoch;
                    return Err(fail(e, report));
                }
            };
            report.steps += 1;
            loss_sum += outcome.loss * chunk.len() as f64;
            correct += outcome.correct;
            forward += outcome.forward_samples;
            if let Some(sel) = &outcome.selections {
                sel.iter().flatten().for_each(|&j| selection[j] += 1);
            }
            if let Some(j) = outcome.pick {
                picks[j] += 1;
            }
            if config.policy.kind == PolicyKind::WAugment {
                report.weight_trace.push(trainer.omega.softmax());
            }
        }
        match config.policy.kind {
            PolicyKind::AlphaTrimmed => report.selection_histogram.push(selection),
            PolicyKind::RandAugment => report.pick_histogram.push(picks),
            _ => {}
        }
        report.forward_samples += forward;

        let val = match evaluate(&trainer.model, val_set) {
            Ok(v) => v,
            Err(e) => {
                report.stop_epoch = epoch;
                return Err(fail(e, report));
            }
        };
        let n = train_set.len() as f64;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            lr: trainer.lr(),
            forward_samples: forward,
        });
        report.stop_epoch = epoch;
        log::debug!(
            "epoch {epoch}: train loss {:.4} val loss {:.4} val acc {:.3}",
            loss_sum / n,
            val.loss,
            val.accuracy
        );

        if val.loss < report.best_val_loss {
            report.best_val_loss = val.loss;
            report.best_epoch = epoch;
            best = (trainer.model.params.clone(), trainer.omega.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if val.loss < plateau_best {
            plateau_best = val.loss;
            since_plateau_best = 0;
        } else {
            since_plateau_best += 1;
            if since_plateau_best >= config.plateau_patience {
                let lr = trainer.lr() * config.plateau_factor;
                log::debug!("epoch {epoch}: validation loss plateaued, lr -> {lr}");
                trainer.set_lr(lr);
                since_plateau_best = 0;
            }
        }
        if since_best >= config.early_stop_patience {
            break;
        }
    }
    trainer.restore(best.0, best.1);
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(TrainOutcome { model: trainer.model, weights: trainer.omega, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Binary F1 (positive class 1) for two classes, macro F1 otherwise.
    pub f1: f64,
    /// Mean cross-entropy.
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
}

pub fn evaluate(model: &Mlp, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty dataset"));
    }
    let inputs: Vec<&[f64]> = dataset.samples.iter().map(|s| s.values.as_slice()).collect();
    let cache = model.forward(&inputs)?;
    let labels = dataset.labels();
    let losses = cache_losses(&cache, &labels)?;
    let probabilities = cache.probs();
    let predictions: Vec<usize> = probabilities.iter().map(|p| argmax(p)).collect();
    let (accuracy, f1) = classification_scores(&predictions, &labels, model.classes.max(dataset.n_classes));
    Ok(Evaluation {
        accuracy,
        f1,
        loss: losses.iter().sum::<f64>() / losses.len() as f64,
        predictions,
        probabilities,
    })
}

/// Accuracy and F1 (binary with positive class 1 when `classes == 2`, macro
/// otherwise). Classes with no true or predicted members score F1 = 0.
pub fn classification_scores(predictions: &[usize], labels: &[usize], classes: usize) -> (f64, f64) {
    let n = labels.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    let f1_for = |class: usize| -> f64 {
        let tp = predictions.iter().zip(labels).filter(|&(&p, &l)| p == class && l == class).count();
        let fp = predictions.iter().zip(labels).filter(|&(&p, &l)| p == class && l != class).count();
        let fn_ = predictions.iter().zip(labels).filter(|&(&p, &l)| p != class && l == class).count();
        if tp + fp + fn_ == 0 {
            log::warn!("class {class} absent from labels and predictions; F1 taken as 0");
            return 0.0;
        }
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    let f1 = if classes == 2 {
        f1_for(1)
    } else {
        (0..classes).map(f1_for).sum::<f64>() / classes as f64
    };
    (correct as f64 / n as f64, f1)
}
