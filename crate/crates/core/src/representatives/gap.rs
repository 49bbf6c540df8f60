//! Gap statistic for choosing the number of medoids.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kmedoids::{pam, DistanceMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub k: usize,
    pub log_w_data: f64,
    pub mean_log_w_reference: f64,
    pub gap: f64,
    pub s_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub records: Vec<GapRecord>,
    pub chosen_k: usize,
}

fn log_w(cost: f64) -> f64 {
    cost.max(f64::MIN_POSITIVE).ln()
}

/// Smallest `K` with `Gap(K) ≥ Gap(K+1) − s_{K+1}`, else the largest `K` evaluated.
pub fn choose_k(records: &[GapRecord]) -> usize {
    for w in records.windows(2) {
        if w[0].gap >= w[1].gap - w[1].s_k {
            return w[0].k;
        }
    }
    records.last().map(|r| r.k).unwrap_or(1)
}

/// `W_K` is the PAM total cost; the `B` reference sets are drawn uniformly over the
/// per-dimension bounding box of the data and shared by every `K`.
pub fn gap_statistic<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    k_max: usize,
    b: usize,
    rng: &mut R,
) -> Result<GapReport> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid(format!("gap statistic needs >= 2 points, got {n}")));
    }
    if k_max == 0 || k_max >= n {
        return Err(Error::invalid(format!("K_max = {k_max} must lie in 1..{n}")));
    }
    if b == 0 {
        return Err(Error::invalid("B must be >= 1"));
    }
    let dim = points[0].as_ref().len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for (i, &v) in p.as_ref().iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let data_dist = DistanceMatrix::euclidean(points);
    if (0..n).all(|j| data_dist.get(0, j) == 0.0) {
        warn!("all {n} points identical; choosing K = 1");
        let records = vec![GapRecord { k: 1, log_w_data: log_w(0.0), mean_log_w_reference: log_w(0.0), gap: 0.0, s_k: 0.0 }];
        return Ok(GapReport { records, chosen_k: 1 });
    }
    let references: Vec<DistanceMatrix> = (0..b)
        .map(|_| {
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..dim)
                        .map(|i| if hi[i] > lo[i] { rng.random_range(lo[i]..hi[i]) } else { lo[i] })
                        .collect()
                })
                .collect();
            DistanceMatrix::euclidean(&pts)
        })
        .collect();
    let mut records = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let log_w_data = log_w(pam(&data_dist, k)?.total_cost);
        let ref_logs: Vec<f64> = references
            .iter()
            .map(|d| pam(d, k).map(|a| log_w(a.total_cost)))
            .collect::<Result<_>>()?;
        let mean = ref_logs.iter().sum::<f64>() / b as f64;
        let sd = (ref_logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / b as f64).sqrt();
        records.push(GapRecord {
            k,
            log_w_data,
            mean_log_w_reference: mean,
            gap: mean - log_w_data,
            s_k: sd * (1.0 + 1.0 / b as f64).sqrt(),
        });
    }
    let chosen_k = choose_k(&records);
    Ok(GapReport { records, chosen_k })
}
