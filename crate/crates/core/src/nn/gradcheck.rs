//! Central-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::model::{Mode, ModelState, ParamKind};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub per_kind: BTreeMap<String, KindReport>,
    /// Samples discarded because a perturbation crossed a kink.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct KindReport {
    pub checked: usize,
    pub max_relative_error: f64,
}

fn kind_name(k: ParamKind) -> &'static str {
    match k {
        ParamKind::BnGamma => "bn_gamma",
        ParamKind::BnBeta => "bn_beta",
        ParamKind::ConvKernel => "conv_kernel",
        ParamKind::DenseWeight => "dense_weight",
        ParamKind::DenseBias => "dense_bias",
    }
}

fn perturbed_loss(model: &mut ModelState, group: usize, idx: usize, value: f64, x: &Tensor, labels: &[usize]) -> Result<(f64, u64)> {
    let old = model.params()[group][idx];
    model.params_mut()[group][idx] = value;
    let r = model.loss_and_grad(x, labels, Mode::Train, None).map(|(l, _, p)| (l, p.fingerprint));
    model.params_mut()[group][idx] = old;
    r
}

/// Compares analytic gradients with `(f(p+h) − f(p−h)) / 2h` on `samples` seeded
/// parameters of every parameter kind. Dropout is off and BN uses the batch
/// statistics of `batch`. A sample whose perturbation changes any activation sign or
/// pooling argmax (a kink) is skipped and redrawn.
pub fn finite_diff_check(
    model: &ModelState,
    batch: &Tensor,
    labels: &[usize],
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut work = model.clone();
    let (_, grads, pass) = work.loss_and_grad(batch, labels, Mode::Train, None)?;
    let base_fp = pass.fingerprint;
    let kinds = work.param_kinds();
    let mut by_kind: BTreeMap<ParamKind, Vec<usize>> = BTreeMap::new();
    for (g, k) in kinds.iter().enumerate() {
        by_kind.entry(*k).or_default().push(g);
    }
    let mut rng = seeded(seed);
    let mut report = GradCheckReport { max_relative_error: 0.0, per_kind: BTreeMap::new(), skipped: 0 };
    for (kind, groups) in by_kind {
        let sizes: Vec<usize> = groups.iter().map(|&g| grads[g].len()).collect();
        let total: usize = sizes.iter().sum();
        let entry = report.per_kind.entry(kind_name(kind).to_string()).or_default();
        let mut attempts = 0;
        while entry.checked < samples && attempts < samples * 20 {
            attempts += 1;
            let mut flat = rng.random_range(0..total);
            let mut gi = 0;
            while flat >= sizes[gi] {
                flat -= sizes[gi];
                gi += 1;
            }
            let group = groups[gi];
            let p = work.params()[group][flat];
            let (plus, fp_plus) = perturbed_loss(&mut work, group, flat, p + h, batch, labels)?;
            let (minus, fp_minus) = perturbed_loss(&mut work, group, flat, p - h, batch, labels)?;
            if fp_plus != base_fp || fp_minus != base_fp {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads[group][flat];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(GRAD_FLOOR);
            entry.checked += 1;
            entry.max_relative_error = entry.max_relative_error.max(rel);
            report.max_relative_error = report.max_relative_error.max(rel);
        }
    }
    Ok(report)
}
