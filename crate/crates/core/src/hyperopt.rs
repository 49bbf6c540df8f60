//! Seeded random search over optimizer, learning rate, batch size, activation and
//! dropout.

use std::io::Write;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImageSet;
use crate::error::{Error, Result};
use crate::nn::{train, Activation, ModelState, OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub optimizers: Vec<OptimizerKind>,
    /// Log-uniform bounds.
    pub learning_rate: (f64, f64),
    pub batch_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Uniform bounds.
    pub dropout: (f64, f64),
    pub trial_epochs: usize,
    pub n_trials: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            optimizers: OptimizerKind::ALL.to_vec(),
            learning_rate: (1e-5, 1e-1),
            batch_sizes: vec![5, 10, 15, 20],
            activations: Activation::ALL.to_vec(),
            dropout: (0.25, 0.5),
            trial_epochs: 10,
            n_trials: 20,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.learning_rate;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::invalid(format!("learning-rate range ({lo}, {hi}) invalid")));
        }
        let (dlo, dhi) = self.dropout;
        if !(0.0 <= dlo && dlo <= dhi && dhi < 1.0) {
            return Err(Error::invalid(format!("dropout range ({dlo}, {dhi}) invalid")));
        }
        if self.optimizers.is_empty() || self.batch_sizes.is_empty() || self.activations.is_empty() {
            return Err(Error::invalid("search space has an empty categorical dimension"));
        }
        if self.batch_sizes.contains(&0) || self.trial_epochs == 0 {
            return Err(Error::invalid("batch sizes and trial epochs must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, cfg: &OptimizerConfig) -> bool {
        self.optimizers.contains(&cfg.algorithm)
            && (self.learning_rate.0..=self.learning_rate.1).contains(&cfg.learning_rate)
            && self.batch_sizes.contains(&cfg.batch_size)
            && self.activations.contains(&cfg.activation)
            && (self.dropout.0..=self.dropout.1).contains(&cfg.dropout_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: OptimizerConfig,
    /// `None` when training diverged.
    pub val_accuracy: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: OptimizerConfig,
    pub best_index: usize,
    pub trials: Vec<Trial>,
}

impl SearchResult {
    /// One JSON object per trial, newline-terminated.
    pub fn to_json_lines(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for t in &self.trials {
            serde_json::to_writer(&mut out, t).expect("trial serializes");
            writeln!(out).expect("write to vec");
        }
        out
    }
}

/// Independent draws per dimension; log-uniform learning rate.
pub fn sample_trial<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> OptimizerConfig {
    let pick = |rng: &mut R, n: usize| rng.random_range(0..n);
    let algorithm = space.optimizers[pick(rng, space.optimizers.len())];
    let (lo, hi) = space.learning_rate;
    let learning_rate = if lo == hi { lo } else { rng.random_range(lo.ln()..hi.ln()).exp().clamp(lo, hi) };
    let batch_size = space.batch_sizes[pick(rng, space.batch_sizes.len())];
    let activation = space.activations[pick(rng, space.activations.len())];
    let dropout_p = if space.dropout.0 == space.dropout.1 {
        space.dropout.0
    } else {
        rng.random_range(space.dropout.0..space.dropout.1)
    };
    let seed = rng.random();
    OptimizerConfig { algorithm, learning_rate, batch_size, activation, dropout_p, epochs: space.trial_epochs, seed }
}

/// Trains a fresh copy of `model` per config; the best validation accuracy wins, the
/// earliest trial on ties.
pub fn run_trials(
    configs: &[OptimizerConfig],
    model: &ModelState,
    train_set: &LabeledImageSet,
    val_set: &LabeledImageSet,
) -> Result<SearchResult> {
    if configs.is_empty() {
        return Err(Error::invalid("search needs at least one trial"));
    }
    let mut trials = Vec::with_capacity(configs.len());
    let mut best: Option<(usize, f64)> = None;
    for (index, cfg) in configs.iter().enumerate() {
        let val_accuracy = match train(model, train_set, val_set, cfg) {
            Ok((_, report)) => report.best_epoch.map(|e| report.val_accuracy[e]),
            Err(Error::Diverged { epoch, batch }) => {
                warn!("trial {index} diverged at epoch {epoch}, batch {batch}");
                None
            }
            Err(e) => return Err(e),
        };
        info!("trial {index}: {cfg:?} -> {val_accuracy:?}");
        if let Some(acc) = val_accuracy {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((index, acc));
            }
        }
        trials.push(Trial { index, config: cfg.clone(), val_accuracy, seed: cfg.seed });
    }
    let (best_index, _) = best.ok_or_else(|| {
        let log = String::from_utf8_lossy(&SearchResult { best: configs[0].clone(), best_index: 0, trials: trials.clone() }.to_json_lines()).into_owned();
        Error::invalid(format!("all {} trials diverged: {}", trials.len(), log.trim_end().replace('\n', "; ")))
    })?;
    Ok(SearchResult { best: configs[best_index].clone(), best_index, trials })
}

pub fn run_search<R: Rng + ?Sized>(
    space: &SearchSpace,
    model: &ModelState,
    train_set: &LabeledImageSet,
    val_set: &LabeledImageSet,
    rng: &mut R,
) -> Result<SearchResult> {
    space.validate()?;
    if space.n_trials == 0 {
        return Err(Error::invalid("n_trials must be >= 1"));
    }
    let configs: Vec<OptimizerConfig> = (0..space.n_trials).map(|_| sample_trial(space, rng)).collect();
    run_trials(&configs, model, train_set, val_set)
}
