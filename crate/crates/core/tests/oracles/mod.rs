//! Slow, direct reference implementations used as test oracles.
#![allow(dead_code)]

use deeppcanet::nn::Tensor;
use deeppcanet::representatives::{medoid_cost, DistanceMatrix};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn random_tensor<R: Rng>(shape: [usize; 4], rng: &mut R) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Same-padded stride-1 cross-correlation by the definition. `weight` rows are
/// `(ky, kx, ci)`, columns are output channels.
pub fn naive_conv(x: &Tensor, weight: &[f64], k: usize, co: usize) -> Vec<f64> {
    let [n, h, w, ci] = x.shape();
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; n * h * w * co];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                for o in 0..co {
                    let mut acc = 0.0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - pad;
                            let sx = xx as isize + kx as isize - pad;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for c in 0..ci {
                                let wv = weight[((ky * k + kx) * ci + c) * co + o];
                                acc += wv * x.at(b, sy as usize, sx as usize, c);
                            }
                        }
                    }
                    out[((b * h + y) * w + xx) * co + o] = acc;
                }
            }
        }
    }
    out
}

/// `Σ (x − μ)(x − μ)ᵀ` as a dense matrix.
pub fn centered_scatter(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut s = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                s[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    s
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns eigenvalues in
/// non-increasing order and the matching unit eigenvectors.
pub fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let vals = order.iter().map(|&i| a[i][i].max(0.0)).collect();
    let vecs = order.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
    (vals, vecs)
}

pub fn oracle_cumulative(vals: &[f64]) -> Vec<f64> {
    let total: f64 = vals.iter().sum();
    let mut acc = 0.0;
    vals.iter()
        .map(|v| {
            acc += v;
            acc / total
        })
        .collect()
}

/// Traces of the dense within- and between-class scatter matrices.
pub fn dense_scatter_traces(feats: &[Vec<f64>], labels: &[usize]) -> (f64, f64) {
    let d = feats[0].len();
    let n = feats.len() as f64;
    let mu: Vec<f64> = (0..d).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / n).collect();
    let classes = labels.iter().max().unwrap() + 1;
    let mut sw = vec![vec![0.0; d]; d];
    let mut sb = vec![vec![0.0; d]; d];
    for c in 0..classes {
        let members: Vec<&Vec<f64>> = feats.iter().zip(labels).filter(|(_, &l)| l == c).map(|(f, _)| f).collect();
        if members.is_empty() {
            continue;
        }
        let nc = members.len() as f64;
        let mc: Vec<f64> = (0..d).map(|j| members.iter().map(|f| f[j]).sum::<f64>() / nc).collect();
        for f in &members {
            for i in 0..d {
                for j in 0..d {
                    sw[i][j] += (f[i] - mc[i]) * (f[j] - mc[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                sb[i][j] += nc * (mc[i] - mu[i]) * (mc[j] - mu[j]);
            }
        }
    }
    ((0..d).map(|i| sw[i][i]).sum(), (0..d).map(|i| sb[i][i]).sum())
}

/// No single medoid/non-medoid exchange lowers the cost.
pub fn is_swap_optimal(dist: &DistanceMatrix, medoids: &[usize]) -> bool {
    let base = medoid_cost(dist, medoids);
    for pos in 0..medoids.len() {
        for cand in 0..dist.len() {
            if medoids.contains(&cand) {
                continue;
            }
            let mut trial = medoids.to_vec();
            trial[pos] = cand;
            if medoid_cost(dist, &trial) < base - 1e-12 {
                return false;
            }
        }
    }
    true
}

fn combos(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combos(n, k, i + 1, cur, out);
        cur.pop();
    }
}

pub fn exhaustive_medoid_cost(dist: &DistanceMatrix, k: usize) -> f64 {
    let mut all = Vec::new();
    combos(dist.len(), k, 0, &mut Vec::new(), &mut all);
    all.iter()
        .map(|m| (0..dist.len()).map(|i| m.iter().map(|&j| dist.get(i, j)).fold(f64::INFINITY, f64::min)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

pub fn gaussian_point<R: Rng>(rng: &mut R, center: [f64; 2], sd: f64) -> Vec<f64> {
    let g = Normal::new(0.0, sd).unwrap();
    vec![center[0] + g.sample(rng), center[1] + g.sample(rng)]
}

/// Fraction of concordant positive/negative pairs, ties counted as one half.
pub fn concordance_auc(scores: &[f64], truth: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &ti) in truth.iter().enumerate() {
        for (j, &tj) in truth.iter().enumerate() {
            if ti && !tj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

#[derive(Debug)]
pub struct OracleMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub kappa_unweighted: f64,
    pub kappa_quadratic: f64,
}

/// Metrics from the expanded list of `(truth, prediction)` pairs rather than from
/// matrix margins. Kappa uses the chance agreement over all truth/prediction pairings.
pub fn pairwise_metrics(counts: &[Vec<u64>]) -> OracleMetrics {
    let c = counts.len();
    let mut pairs = Vec::new();
    for (t, row) in counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            pairs.extend(std::iter::repeat((t, p)).take(n as usize));
        }
    }
    let n = pairs.len() as f64;
    let accuracy = pairs.iter().filter(|(t, p)| t == p).count() as f64 / n;
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let one_vs_rest = |k: usize| {
        let se = rate(
            pairs.iter().filter(|&&(t, p)| t == k && p == k).count(),
            pairs.iter().filter(|&&(t, _)| t == k).count(),
        );
        let sp = rate(
            pairs.iter().filter(|&&(t, p)| t != k && p != k).count(),
            pairs.iter().filter(|&&(t, _)| t != k).count(),
        );
        (se, sp)
    };
    let (sensitivity, specificity) = if c == 2 {
        let (se, sp) = one_vs_rest(1);
        (se.unwrap_or(0.0), sp.unwrap_or(0.0))
    } else {
        let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let ses: Vec<f64> = (0..c).filter_map(|k| one_vs_rest(k).0).collect();
        let sps: Vec<f64> = (0..c).filter_map(|k| one_vs_rest(k).1).collect();
        (mean(ses), mean(sps))
    };
    let kappa = |weight: &dyn Fn(usize, usize) -> f64| {
        let po = pairs.iter().map(|&(t, p)| weight(t, p)).sum::<f64>() / n;
        let mut pe = 0.0;
        for &(t, _) in &pairs {
            for &(_, p) in &pairs {
                pe += weight(t, p);
            }
        }
        pe /= n * n;
        if (1.0 - pe).abs() < 1e-15 {
            if (1.0 - po).abs() < 1e-15 {
                1.0
            } else {
                0.0
            }
        } else {
            (po - pe) / (1.0 - pe)
        }
    };
    let denom = ((c - 1) * (c - 1)) as f64;
    OracleMetrics {
        accuracy,
        sensitivity,
        specificity,
        kappa_unweighted: kappa(&|i, j| if i == j { 1.0 } else { 0.0 }),
        kappa_quadratic: kappa(&|i, j| 1.0 - ((i as f64 - j as f64).powi(2)) / denom),
    }
}

/// Twenty confusion matrices: hand-picked edge cases plus seeded random ones.
pub fn metric_fixtures() -> Vec<Vec<Vec<u64>>> {
    let mut out = vec![
        vec![vec![40, 10], vec![5, 45]],
        vec![vec![10, 0], vec![0, 10]],
        vec![vec![0, 10], vec![10, 0]],
        vec![vec![25, 25], vec![25, 25]],
        vec![vec![7, 3, 0], vec![2, 8, 1], vec![0, 4, 6]],
        vec![vec![5, 0, 0, 0, 0], vec![1, 4, 0, 0, 0], vec![0, 2, 3, 0, 0], vec![0, 0, 1, 3, 1], vec![0, 0, 0, 2, 3]],
        vec![vec![3, 1, 0], vec![0, 0, 0], vec![1, 0, 4]],
        vec![vec![12, 0], vec![0, 0]],
    ];
    let mut rng = deeppcanet::rng::seeded(0xf1);
    while out.len() < 20 {
        let c = rng.random_range(2..=5);
        let m: Vec<Vec<u64>> = (0..c).map(|_| (0..c).map(|_| rng.random_range(0..15)).collect()).collect();
        if m.iter().flatten().sum::<u64>() > 0 {
            out.push(m);
        }
    }
    out
}
