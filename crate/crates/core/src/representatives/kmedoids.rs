//! Partitioning Around Medoids: greedy BUILD followed by best-improvement SWAP.

use crate::error::{Error, Result};

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Symmetric pairwise distance matrix, row-major `n × n`.
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn euclidean<P: AsRef<[f64]>>(points: &[P]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = euclidean(points[i].as_ref(), points[j].as_ref());
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedoidAssignment {
    /// Point indices of the medoids.
    pub medoid_indices: Vec<usize>,
    /// For each point, the position in `medoid_indices` of its medoid.
    pub assignment: Vec<usize>,
    /// Sum of distances from every point to its medoid.
    pub total_cost: f64,
}

impl MedoidAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.medoid_indices.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Total cost of a medoid set, each point charged its nearest medoid distance.
pub fn medoid_cost(dist: &DistanceMatrix, medoids: &[usize]) -> f64 {
    (0..dist.len())
        .map(|j| medoids.iter().map(|&m| dist.get(j, m)).fold(f64::INFINITY, f64::min))
        .sum()
}

pub fn k_medoids<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<MedoidAssignment> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", points.len())));
    }
    pam(&DistanceMatrix::euclidean(points), k)
}

/// PAM on a precomputed distance matrix. Deterministic; ties go to the lowest index.
pub fn pam(dist: &DistanceMatrix, k: usize) -> Result<MedoidAssignment> {
    let n = dist.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let mut medoids = build(dist, k);
    swap(dist, &mut medoids);
    Ok(assign(dist, medoids))
}

fn build(dist: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = dist.len();
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = usize::MAX;
        let mut best_cost = f64::INFINITY;
        for c in (0..n).filter(|&c| !is_medoid[c]) {
            let cost: f64 = (0..n).map(|j| nearest[j].min(dist.get(j, c))).sum();
            if cost < best_cost {
                best_cost = cost;
                best = c;
            }
        }
        is_medoid[best] = true;
        medoids.push(best);
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist.get(j, best));
        }
    }
    medoids
}

/// Nearest and second-nearest medoid (positions into `medoids`) and distances.
fn nearest_two(dist: &DistanceMatrix, medoids: &[usize], j: usize) -> (usize, f64, f64) {
    let mut near = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (pos, &m) in medoids.iter().enumerate() {
        let d = if m == j { 0.0 } else { dist.get(j, m) };
        if d < near.1 {
            second = near.1;
            near = (pos, d);
        } else if d < second {
            second = d;
        }
    }
    (near.0, near.1, second)
}

const SWAP_TOL: f64 = 1e-12;

fn swap(dist: &DistanceMatrix, medoids: &mut [usize]) {
    let n = dist.len();
    let k = medoids.len();
    if k == n {
        return;
    }
    loop {
        let cache: Vec<(usize, f64, f64)> = (0..n).map(|j| nearest_two(dist, medoids, j)).collect();
        let mut best = (0.0, usize::MAX, usize::MAX);
        for (pos, _) in medoids.iter().enumerate() {
            for h in (0..n).filter(|h| !medoids.contains(h)) {
                let mut delta = 0.0;
                for (j, &(near, d_near, d_second)) in cache.iter().enumerate() {
                    let d_h = dist.get(j, h);
                    let new = if near == pos { d_second.min(d_h) } else { d_near.min(d_h) };
                    delta += new - d_near;
                }
                if delta < best.0 {
                    best = (delta, pos, h);
                }
            }
        }
        if best.0 < -SWAP_TOL {
            medoids[best.1] = best.2;
        } else {
            break;
        }
    }
}

fn assign(dist: &DistanceMatrix, medoids: Vec<usize>) -> MedoidAssignment {
    let n = dist.len();
    let mut assignment = Vec::with_capacity(n);
    let mut total = 0.0;
    for j in 0..n {
        let (pos, d) = match medoids.iter().position(|&m| m == j) {
            Some(p) => (p, 0.0),
            None => {
                let (p, d, _) = nearest_two(dist, &medoids, j);
                (p, d)
            }
        };
        assignment.push(pos);
        total += d;
    }
    MedoidAssignment { medoid_indices: medoids, assignment, total_cost: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.2],
            vec![5.0, 5.0],
            vec![5.1, 5.2],
            vec![4.9, 5.0],
        ]
    }

    #[test]
    fn saturated_k_has_zero_cost() {
        let r = k_medoids(&blobs(), 6).unwrap();
        assert_eq!(r.total_cost, 0.0);
        let mut m = r.medoid_indices.clone();
        m.sort();
        assert_eq!(m, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn k_one_is_linear_scan_minimum() {
        let pts = blobs();
        let scan = (0..pts.len())
            .min_by(|&a, &b| {
                let ca: f64 = pts.iter().map(|p| euclidean(p, &pts[a])).sum();
                let cb: f64 = pts.iter().map(|p| euclidean(p, &pts[b])).sum();
                ca.partial_cmp(&cb).unwrap()
            })
            .unwrap();
        assert_eq!(k_medoids(&pts, 1).unwrap().medoid_indices, vec![scan]);
    }

    #[test]
    fn two_blobs_match_exhaustive() {
        let pts = blobs();
        let dist = DistanceMatrix::euclidean(&pts);
        let mut best = f64::INFINITY;
        for a in 0..6 {
            for b in a + 1..6 {
                best = best.min(medoid_cost(&dist, &[a, b]));
            }
        }
        let r = k_medoids(&pts, 2).unwrap();
        assert!((r.total_cost - best).abs() < 1e-12);
        assert_eq!(r.cluster_sizes(), vec![3, 3]);
    }

    #[test]
    fn k_too_large() {
        assert!(k_medoids(&blobs(), 7).is_err());
        assert!(k_medoids(&blobs(), 0).is_err());
    }
}
