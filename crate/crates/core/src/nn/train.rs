use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Mode, ModelState};
use super::optim::{OptimizerConfig, OptimizerState};
use super::tensor::Tensor;
use crate::dataset::LabeledImageSet;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Zero-based epoch with the highest validation accuracy (earliest on ties).
    pub best_epoch: Option<usize>,
    pub wall_time_secs: f64,
}

const TRAIN_STREAM: u64 = 0x7472_6169_6e;

/// Eval-mode mean cross-entropy and accuracy over a set, batched.
pub fn evaluate_loss_accuracy(model: &ModelState, set: &LabeledImageSet, batch: usize) -> Result<(f64, f64)> {
    let x = Tensor::from_images(set.items())?;
    let labels = set.labels();
    let mut loss = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let probs = model.predict(&x.select(chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let row = probs.row(r);
            loss -= row[labels[i]].max(f64::MIN_POSITIVE).ln();
            if argmax(row) == labels[i] {
                correct += 1;
            }
        }
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Minibatch training with per-epoch seeded shuffling. The parameters of the epoch
/// with the best validation accuracy are returned.
pub fn train(
    model: &ModelState,
    train_set: &LabeledImageSet,
    val_set: &LabeledImageSet,
    cfg: &OptimizerConfig,
) -> Result<(ModelState, TrainReport)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::NoSamples);
    }
    if train_set.num_classes() != model.num_classes() || val_set.num_classes() != model.num_classes() {
        return Err(Error::invalid("train/validation class count differs from the model"));
    }
    if !(cfg.learning_rate > 0.0) || cfg.batch_size == 0 {
        return Err(Error::invalid("learning_rate must be > 0 and batch_size > 0"));
    }
    let start = Instant::now();
    let mut current = model.clone();
    current.set_activation(cfg.activation);
    current.set_dropout(cfg.dropout_p);
    current.train_mode = true;
    let mut best = current.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        best_epoch: None,
        wall_time_secs: 0.0,
    };
    let x_all = Tensor::from_images(train_set.items())?;
    let labels = train_set.labels();
    let mut opt = OptimizerState::new(cfg.algorithm);
    let mut rng = stream(cfg.seed, TRAIN_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x_all.select(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads, pass) = current.loss_and_grad(&xb, &yb, Mode::Train, Some(&mut rng))?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            epoch_loss += loss * chunk.len() as f64;
            current.update_running_stats(&pass);
            opt.step(current.params_mut(), &grads, cfg.learning_rate);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        current.train_mode = false;
        let (val_loss, val_acc) = evaluate_loss_accuracy(&current, val_set, 32)?;
        current.train_mode = true;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0 });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.val_accuracy.push(val_acc);
        if val_acc > best_acc {
            best_acc = val_acc;
            best = current.clone();
            report.best_epoch = Some(epoch);
        }
        debug!("epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5} val_acc {val_acc:.4}");
    }
    if let Some(e) = report.best_epoch {
        info!("best validation accuracy {:.4} at epoch {e}", report.val_accuracy[e]);
    }
    best.train_mode = false;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok((best, report))
}
