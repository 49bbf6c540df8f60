use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for the within-class trace in the ratio.
pub const TRACE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterSummary {
    pub trace_sw: f64,
    pub trace_sb: f64,
    pub tr: f64,
}

/// Traces of the within- and between-class scatter matrices, computed from squared
/// norms, and their ratio `tr(S_b) / max(tr(S_w), 1e-12)`.
pub fn trace_ratio<F: AsRef<[f64]>>(features: &[F], labels: &[usize]) -> Result<ScatterSummary> {
    if features.len() != labels.len() {
        return Err(Error::invalid(format!("{} feature vectors but {} labels", features.len(), labels.len())));
    }
    if features.len() < 2 {
        return Err(Error::invalid("trace ratio needs at least 2 vectors"));
    }
    let dim = features[0].as_ref().len();
    if features.iter().any(|f| f.as_ref().len() != dim) {
        return Err(Error::invalid("feature vectors differ in dimension"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (f, &y) in features.iter().zip(labels) {
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(f.as_ref()) {
            *s += v;
        }
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s.iter().map(|v| v / c as f64).collect() } else { s.clone() })
        .collect();
    let n = features.len() as f64;
    let mut grand = vec![0.0; dim];
    for s in &sums {
        for (g, v) in grand.iter_mut().zip(s) {
            *g += v / n;
        }
    }
    let mut trace_sw = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        trace_sw += f.as_ref().iter().zip(&means[y]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let mut trace_sb = 0.0;
    for (mu, &c) in means.iter().zip(&counts) {
        if c > 0 {
            trace_sb += c as f64 * mu.iter().zip(&grand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    Ok(ScatterSummary { trace_sw, trace_sb, tr: trace_sb / trace_sw.max(TRACE_FLOOR) })
}
