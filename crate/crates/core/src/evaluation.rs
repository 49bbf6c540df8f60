//! Classification metrics, ROC analysis and Grad-CAM heatmaps.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImage;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{global_pool_backward, global_pool_forward, Fingerprint, Mode, ModelState, Tensor};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c < 2 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("confusion matrix must be square with at least 2 classes"));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// One-vs-rest `(TP, FN, FP, TN)` for class `k`.
    pub fn one_vs_rest(&self, k: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[k][k];
        let fn_ = self.row_sum(k) - tp;
        let fp = self.col_sum(k) - tp;
        let tn = self.total() - tp - fn_ - fp;
        (tp, fn_, fp, tn)
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::invalid(format!("{} truth labels but {} predictions", truth.len(), predicted.len())));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::invalid(format!("label pair ({t}, {p}) not below {num_classes}")));
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub kappa_unweighted: f64,
    pub kappa_quadratic: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn kappa(cm: &ConfusionMatrix, weight: impl Fn(usize, usize) -> f64) -> f64 {
    let c = cm.num_classes();
    let n = cm.total() as f64;
    let rows: Vec<f64> = (0..c).map(|i| cm.row_sum(i) as f64 / n).collect();
    let cols: Vec<f64> = (0..c).map(|j| cm.col_sum(j) as f64 / n).collect();
    let mut po = 0.0;
    let mut pe = 0.0;
    for i in 0..c {
        for j in 0..c {
            let wt = weight(i, j);
            po += wt * cm.counts[i][j] as f64 / n;
            pe += wt * rows[i] * cols[j];
        }
    }
    if (1.0 - pe).abs() < 1e-15 {
        // every rating falls in one category on both sides
        return if (1.0 - po).abs() < 1e-15 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

/// Accuracy, sensitivity, specificity and Cohen's kappa (plain and quadratic-weighted).
///
/// Two classes: class 1 is positive. More classes: SE and SP are unweighted means of
/// the one-vs-rest values, skipping classes whose denominator is zero.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let c = cm.num_classes();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let (tp, fn_, fp, tn) = cm.one_vs_rest(k);
            ClassMetrics { class: k, sensitivity: ratio(tp, tp + fn_), specificity: ratio(tn, tn + fp) }
        })
        .collect();
    let (sensitivity, specificity) = if c == 2 {
        let se = per_class[1].sensitivity.unwrap_or_else(|| {
            warn!("no positive samples; sensitivity undefined, reported as 0");
            0.0
        });
        let sp = per_class[1].specificity.unwrap_or_else(|| {
            warn!("no negative samples; specificity undefined, reported as 0");
            0.0
        });
        (se, sp)
    } else {
        let macro_mean = |vals: Vec<Option<f64>>, name: &str| {
            let defined: Vec<f64> = vals.iter().flatten().copied().collect();
            if defined.len() < vals.len() {
                warn!("{} class(es) excluded from macro {name}", vals.len() - defined.len());
            }
            if defined.is_empty() {
                0.0
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            }
        };
        (
            macro_mean(per_class.iter().map(|m| m.sensitivity).collect(), "sensitivity"),
            macro_mean(per_class.iter().map(|m| m.specificity).collect(), "specificity"),
        )
    };
    let span = ((c - 1) * (c - 1)) as f64;
    Ok(MetricsReport {
        accuracy: cm.correct() as f64 / total as f64,
        sensitivity,
        specificity,
        kappa_unweighted: kappa(cm, |i, j| if i == j { 1.0 } else { 0.0 }),
        kappa_quadratic: kappa(cm, |i, j| 1.0 - ((i as f64 - j as f64).powi(2)) / span),
        per_class,
        confusion: cm.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From `(0, 0)` at an infinite threshold down to `(1, 1)` at the lowest score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        out
    }
}

/// Sweeps every distinct score as a threshold (`score ≥ t` is positive) and integrates
/// the curve with the trapezoid rule.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both classes present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: t, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

/// Non-negative map over the input grid, scaled so its maximum is 1 unless all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Sum over columns `[x0, x1)`.
    pub fn column_mass(&self, x0: usize, x1: usize) -> f64 {
        (0..self.height).map(|y| (x0..x1).map(|x| self.get(y, x)).sum::<f64>()).sum()
    }

    /// `(left, right)` half masses; a middle column of an odd width is ignored.
    pub fn half_masses(&self) -> (f64, f64) {
        let half = self.width / 2;
        (self.column_mass(0, half), self.column_mass(self.width - half, self.width))
    }

    pub fn to_image(&self) -> Image {
        Image::new(self.height, self.width, 1, self.values.clone()).expect("heatmap shape")
    }

    /// Greyscale input with the heatmap blended into the red channel.
    pub fn overlay(&self, input: &Image) -> Image {
        Image::from_fn(self.height, self.width, 3, |y, x, c| {
            let g = input.luminance(y, x);
            let h = self.get(y, x);
            match c {
                0 => 0.5 * g + 0.5 * h,
                _ => 0.5 * g,
            }
        })
    }
}

/// Grad-CAM on the last conv block's output: channel weights are the spatial means of
/// the gradient of the target logit, the map is `relu(Σ w_k A_k)`, upsampled bilinearly
/// to the input size and max-normalized.
pub fn grad_cam(model: &ModelState, img: &LabeledImage, target_class: usize) -> Result<Heatmap> {
    let head = model.head().ok_or_else(|| Error::invalid("grad-cam needs a model with a head"))?;
    if target_class >= model.num_classes() {
        return Err(Error::invalid(format!("target class {target_class} not below {}", model.num_classes())));
    }
    let x = Tensor::from_images([img])?;
    let features = model.features(&x, Mode::Eval)?;
    let [_, h, w, c] = features.shape();
    let (_, argmax) = global_pool_forward(&features, &mut Fingerprint::default());
    let dense = &head.dense;
    let d_pooled: Vec<f64> = (0..dense.inputs).map(|i| dense.weight[i * dense.outputs + target_class]).collect();
    let grad = global_pool_backward(&Tensor::matrix(1, dense.inputs, d_pooled)?, &argmax, features.shape());
    let hw = (h * w) as f64;
    let mut weights = vec![0.0; c];
    for px in grad.data().chunks_exact(c) {
        for (acc, g) in weights.iter_mut().zip(px) {
            *acc += g / hw;
        }
    }
    let cam: Vec<f64> = features
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().zip(&weights).map(|(a, wk)| a * wk).sum::<f64>().max(0.0))
        .collect();
    let small = Image::new(h, w, 1, cam)?;
    let [ih, iw, _] = model.arch().input;
    let mut values = small.resize_bilinear(ih, iw).into_data();
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    let mx = values.iter().copied().fold(0.0, f64::max);
    if mx > 0.0 {
        values.iter_mut().for_each(|v| *v /= mx);
    }
    Ok(Heatmap { height: ih, width: iw, values })
}
