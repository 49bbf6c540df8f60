//! Layer width and kernel values from the principal components of activation patches.
//!
//! Patches are tiled from a batch of feature maps, centred, and decomposed. The
//! smallest number `L` of leading components whose eigenvalue mass reaches the energy
//! threshold become kernels, and the remaining components are summed into one extra
//! unit-norm kernel.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-10;
const MIN_TOTAL_VARIANCE: f64 = 1e-12;

/// `count` patch vectors of dimension `dim`, stored one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: Vec<f64>,
    count: usize,
    dim: usize,
    /// `(h, w, d)` of one block.
    pub block_shape: (usize, usize, usize),
    pub source_count: usize,
}

impl PatchMatrix {
    pub fn from_rows(rows: &[Vec<f64>], block_shape: (usize, usize, usize)) -> Result<Self> {
        let dim = block_shape.0 * block_shape.1 * block_shape.2;
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid(format!("patch rows must have dimension {dim}")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("patch values must be finite"));
        }
        Ok(PatchMatrix {
            data: rows.concat(),
            count: rows.len(),
            dim,
            block_shape,
            source_count: rows.len(),
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for r in self.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.count as f64);
        mean
    }

    fn centered(&self) -> (DMatrix<f64>, Vec<f64>) {
        let mean = self.mean();
        let m = DMatrix::from_fn(self.count, self.dim, |i, j| self.data[i * self.dim + j] - mean[j]);
        (m, mean)
    }
}

/// Tiles every map into `block_h × block_w` blocks with the given stride (non-overlapping
/// when the stride equals the block size). Rows are ordered image-major, then row-major
/// over tile positions; each block flattens as `(row, column, channel)`.
pub fn extract_blocks_strided(
    maps: &Tensor,
    block_h: usize,
    block_w: usize,
    stride: (usize, usize),
) -> Result<PatchMatrix> {
    let [n, h, w, d] = maps.shape();
    if block_h == 0 || block_w == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::invalid("block size and stride must be positive"));
    }
    if h < block_h || w < block_w {
        return Err(Error::invalid(format!(
            "maps of {h}x{w} are smaller than {block_h}x{block_w} blocks"
        )));
    }
    let ty = (h - block_h) / stride.0 + 1;
    let tx = (w - block_w) / stride.1 + 1;
    let dim = block_h * block_w * d;
    let mut data = Vec::with_capacity(n * ty * tx * dim);
    for b in 0..n {
        let item = maps.item(b);
        for iy in 0..ty {
            for ix in 0..tx {
                for y in 0..block_h {
                    let row = iy * stride.0 + y;
                    let start = (row * w + ix * stride.1) * d;
                    data.extend_from_slice(&item[start..start + block_w * d]);
                }
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("activation maps contain non-finite values"));
    }
    Ok(PatchMatrix { data, count: n * ty * tx, dim, block_shape: (block_h, block_w, d), source_count: n })
}

/// Non-overlapping tiling; remainder rows and columns are discarded.
pub fn extract_blocks(maps: &Tensor, block_h: usize, block_w: usize) -> Result<PatchMatrix> {
    extract_blocks_strided(maps, block_h, block_w, (block_h, block_w))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenRoute {
    /// Covariance when `count >= dim`, Gram matrix otherwise.
    #[default]
    Auto,
    /// Eigendecomposition of the `dim × dim` scatter `φᵀφ`.
    Covariance,
    /// Eigendecomposition of the `count × count` Gram matrix `φφᵀ`; each eigenvector
    /// `u` maps to `φᵀu / √λ`.
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderWeighting {
    #[default]
    Unweighted,
    /// Weight each discarded component by its eigenvalue before summing.
    Eigenvalue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    /// All `dim` eigenvalues of the unnormalized scatter `ΣφφT`, non-increasing, ≥ 0.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors for the non-zero eigenvalues, in the same order. Each one's
    /// largest-magnitude entry is non-negative.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `cumulative_energy[i] = Σ_{j≤i} λ_j / Σ_j λ_j`.
    pub cumulative_energy: Vec<f64>,
    pub mean: Vec<f64>,
}

impl EigenSpectrum {
    pub fn total(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Smallest `L ≥ 1` whose cumulative energy reaches `epsilon`.
    pub fn select_count(&self, epsilon: f64) -> usize {
        self.cumulative_energy
            .iter()
            .position(|&e| e >= epsilon)
            .map(|i| i + 1)
            .unwrap_or(self.eigenvectors.len())
            .min(self.eigenvectors.len())
            .max(1)
    }

    /// CSV with header `component,eigenvalue,cumulative_energy`; components are 1-based.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,eigenvalue,cumulative_energy\n");
        for (i, (l, e)) in self.eigenvalues.iter().zip(&self.cumulative_energy).enumerate() {
            s.push_str(&format!("{},{l},{e}\n", i + 1));
        }
        s
    }
}

fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

pub fn energy_profile(patches: &PatchMatrix) -> Result<EigenSpectrum> {
    energy_profile_with(patches, EigenRoute::Auto)
}

pub fn energy_profile_with(patches: &PatchMatrix, route: EigenRoute) -> Result<EigenSpectrum> {
    if patches.count < 2 {
        return Err(Error::invalid(format!("need at least 2 patches, got {}", patches.count)));
    }
    let (phi, mean) = patches.centered();
    let total_var: f64 = phi.iter().map(|v| v * v).sum();
    if !(total_var > MIN_TOTAL_VARIANCE) {
        return Err(Error::DegeneratePatches(total_var));
    }
    let dim = patches.dim;
    let use_gram = match route {
        EigenRoute::Auto => patches.count < dim,
        EigenRoute::Covariance => false,
        EigenRoute::Gram => true,
    };
    let mut pairs: Vec<(f64, Vec<f64>)> = if use_gram {
        let eig = SymmetricEigen::new(&phi * phi.transpose());
        eig.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let v = phi.tr_mul(&eig.eigenvectors.column(i));
                (l, v.iter().copied().collect())
            })
            .collect()
    } else {
        let cov = phi.transpose() * &phi;
        let eig = SymmetricEigen::new(cov);
        eig.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, l)| (*l, eig.eigenvectors.column(i).iter().copied().collect()))
            .collect()
    };
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let top = pairs.first().map(|p| p.0).unwrap_or(0.0).max(0.0);
    let mut eigenvalues = Vec::with_capacity(dim);
    let mut eigenvectors = Vec::new();
    for (l, mut v) in pairs {
        if l > ZERO_EIGEN_TOL * top {
            normalize(&mut v);
            canonical_sign(&mut v);
            eigenvalues.push(l);
            eigenvectors.push(v);
        }
    }
    eigenvalues.resize(dim, 0.0);
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    let cumulative_energy = eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            acc / total
        })
        .collect();
    Ok(EigenSpectrum { eigenvalues, eigenvectors, cumulative_energy, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub route: EigenRoute,
    pub remainder: RemainderWeighting,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { route: EigenRoute::Auto, remainder: RemainderWeighting::Unweighted }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    /// Flattened kernels in `(row, column, channel)` order: `L` components, then the
    /// remainder kernel when one exists.
    pub kernels: Vec<Vec<f64>>,
    pub block_shape: (usize, usize, usize),
    pub selected_count: usize,
    pub mean_vector: Vec<f64>,
    pub energy_threshold: f64,
    pub spectrum: EigenSpectrum,
}

impl KernelBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn has_remainder(&self) -> bool {
        self.kernels.len() > self.selected_count
    }
}

pub fn derive_kernel_bank(patches: &PatchMatrix, epsilon: f64) -> Result<KernelBank> {
    derive_kernel_bank_with(patches, epsilon, KernelOptions::default())
}

pub fn derive_kernel_bank_with(patches: &PatchMatrix, epsilon: f64, opts: KernelOptions) -> Result<KernelBank> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon out of range: {epsilon} not in (0,1]")));
    }
    let spectrum = energy_profile_with(patches, opts.route)?;
    let l = spectrum.select_count(epsilon);
    let mut kernels: Vec<Vec<f64>> = spectrum.eigenvectors[..l].to_vec();
    let rest = &spectrum.eigenvectors[l..];
    if !rest.is_empty() {
        let mut sum = vec![0.0; patches.dim];
        for (j, u) in rest.iter().enumerate() {
            let w = match opts.remainder {
                RemainderWeighting::Unweighted => 1.0,
                RemainderWeighting::Eigenvalue => spectrum.eigenvalues[l + j],
            };
            for (s, x) in sum.iter_mut().zip(u) {
                *s += w * x;
            }
        }
        if normalize(&mut sum) > 0.0 {
            kernels.push(sum);
        }
    }
    Ok(KernelBank {
        kernels,
        block_shape: patches.block_shape,
        selected_count: l,
        mean_vector: spectrum.mean.clone(),
        energy_threshold: epsilon,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps(n: usize, h: usize, w: usize, d: usize) -> Tensor {
        let len = n * h * w * d;
        Tensor::new([n, h, w, d], (0..len).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn tiling_counts() {
        let p = extract_blocks(&maps(1, 14, 14, 3), 7, 7).unwrap();
        assert_eq!((p.count(), p.dim()), (4, 147));
        // second tile in row-major order starts at column 7
        assert_eq!(p.row(1)[0], (7 * 3) as f64);
        let p = extract_blocks(&maps(1, 8, 8, 1), 7, 7).unwrap();
        assert_eq!(p.count(), 1);
        assert_eq!(p.row(0)[7], 8.0);
    }

    #[test]
    fn exact_fit_is_whole_map() {
        let m = maps(1, 7, 7, 3);
        let p = extract_blocks(&m, 7, 7).unwrap();
        assert_eq!(p.row(0), m.item(0));
    }

    #[test]
    fn too_small_map_errors() {
        assert!(extract_blocks(&maps(1, 6, 8, 1), 7, 7).is_err());
    }

    #[test]
    fn routes_agree_on_tall_and_wide() {
        for (count, dim) in [(30, 28), (56, 7), (5, 20)] {
            let rows: Vec<Vec<f64>> =
                (0..count).map(|i| (0..dim).map(|j| ((i * 7 + j * 3) % 11) as f64 + (i * j) as f64 * 0.01).collect()).collect();
            let p = PatchMatrix::from_rows(&rows, (1, dim, 1)).unwrap();
            let a = energy_profile_with(&p, EigenRoute::Covariance).unwrap();
            let b = energy_profile_with(&p, EigenRoute::Gram).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                assert!((x - y).abs() <= 1e-9 * a.eigenvalues[0], "{count}x{dim}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn two_point_energy() {
        // rows (2,0) and (0,1) plus their negatives: per-axis variances 4 and 1
        let rows = vec![vec![2.0, 0.0], vec![-2.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let p = PatchMatrix::from_rows(&rows, (1, 2, 1)).unwrap();
        let s = energy_profile(&p).unwrap();
        assert!((s.cumulative_energy[0] - 0.8).abs() < 1e-12);
        assert!((s.cumulative_energy[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_reaches_full_energy() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let p = PatchMatrix::from_rows(&rows, (1, 3, 1)).unwrap();
        let s = energy_profile(&p).unwrap();
        assert!((s.cumulative_energy[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.eigenvectors.len(), 1);
    }

    #[test]
    fn degenerate_patches_rejected() {
        let rows = vec![vec![1.0, 2.0]; 4];
        let p = PatchMatrix::from_rows(&rows, (1, 2, 1)).unwrap();
        assert!(matches!(derive_kernel_bank(&p, 0.9), Err(Error::DegeneratePatches(_))));
    }

    #[test]
    fn high_threshold_leaves_last_vector_as_remainder() {
        let rows = vec![
            vec![3.0, 0.1, 0.0],
            vec![-3.0, 0.0, 0.2],
            vec![0.0, 1.0, -0.3],
            vec![0.1, -1.0, 0.5],
            vec![0.2, 0.3, -0.4],
        ];
        let p = PatchMatrix::from_rows(&rows, (1, 3, 1)).unwrap();
        let s = energy_profile(&p).unwrap();
        let bank = derive_kernel_bank(&p, s.cumulative_energy[1]).unwrap();
        assert_eq!(bank.selected_count, 2);
        assert_eq!(bank.kernels.len(), 3);
        assert_eq!(bank.kernels[2], s.eigenvectors[2]);
    }

    #[test]
    fn full_energy_has_no_remainder() {
        let rows = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.5], vec![0.0, -0.5]];
        let p = PatchMatrix::from_rows(&rows, (1, 2, 1)).unwrap();
        let bank = derive_kernel_bank(&p, 1.0).unwrap();
        assert_eq!(bank.selected_count, 2);
        assert!(!bank.has_remainder());
    }

    #[test]
    fn epsilon_validated() {
        let rows = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let p = PatchMatrix::from_rows(&rows, (1, 2, 1)).unwrap();
        assert!(derive_kernel_bank(&p, 1.5).is_err());
        assert!(derive_kernel_bank(&p, 0.0).is_err());
    }

    #[test]
    fn csv_export() {
        let rows = vec![vec![2.0, 0.0], vec![-2.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let s = energy_profile(&PatchMatrix::from_rows(&rows, (1, 2, 1)).unwrap()).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("component,eigenvalue,cumulative_energy\n1,"));
        assert_eq!(csv.lines().count(), 3);
    }
}
