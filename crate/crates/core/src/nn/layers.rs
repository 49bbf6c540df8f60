//! Forward and backward passes for every layer kind. Gradients are hand-derived.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;
pub const LRELU_SLOPE: f64 = 0.01;

/// `C = A·B + beta·C` for strided row/column-major operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe matrices that lie inside the given slices; every
    // caller passes buffers sized exactly m×k, k×n and m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// FNV-1a over the discrete choices a forward pass makes (activation signs, pooling
/// argmaxes). Two passes with equal fingerprints lie on the same smooth piece.
#[derive(Debug, Clone, Copy)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }
}

impl Fingerprint {
    #[inline]
    pub fn mix(&mut self, v: u64) {
        self.0 ^= v;
        self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

// ---------------------------------------------------------------------------
// convolution

/// Stride-1 cross-correlation with "same" zero padding. `weight` is a
/// `(k·k·c_in) × c_out` row-major matrix whose rows follow `(ky, kx, c_in)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(kernel_size: usize, in_channels: usize, out_channels: usize) -> Self {
        Conv2d {
            kernel_size,
            in_channels,
            out_channels,
            weight: vec![0.0; kernel_size * kernel_size * in_channels * out_channels],
        }
    }

    /// Column `j` of the weight matrix, i.e. kernel `j` flattened.
    pub fn kernel(&self, j: usize) -> Vec<f64> {
        self.weight.iter().skip(j).step_by(self.out_channels).copied().collect()
    }

    pub fn set_kernel(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.patch_len());
        for (r, &v) in values.iter().enumerate() {
            self.weight[r * self.out_channels + j] = v;
        }
    }

    pub fn patch_len(&self) -> usize {
        self.kernel_size * self.kernel_size * self.in_channels
    }

    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let [n, h, w, c] = x.shape();
        let k = self.kernel_size;
        let pad = (k / 2) as isize;
        let plen = self.patch_len();
        let mut col = vec![0.0; n * h * w * plen];
        let src = x.data();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let row = ((b * h + y) * w + xx) * plen;
                    for ky in 0..k {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let sx = xx as isize + kx as isize - pad;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let s = ((b * h + sy as usize) * w + sx as usize) * c;
                            let d = row + (ky * k + kx) * c;
                            col[d..d + c].copy_from_slice(&src[s..s + c]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, dcol: &[f64], shape: [usize; 4]) -> Tensor {
        let [n, h, w, c] = shape;
        let k = self.kernel_size;
        let pad = (k / 2) as isize;
        let plen = self.patch_len();
        let mut dx = Tensor::zeros(shape);
        let dst = dx.data_mut();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let row = ((b * h + y) * w + xx) * plen;
                    for ky in 0..k {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let sx = xx as isize + kx as isize - pad;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let s = ((b * h + sy as usize) * w + sx as usize) * c;
                            let d = row + (ky * k + kx) * c;
                            for (o, g) in dst[s..s + c].iter_mut().zip(&dcol[d..d + c]) {
                                *o += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    /// Returns the output and the im2col matrix needed by [`Conv2d::backward`].
    pub fn forward(&self, x: &Tensor) -> (Tensor, Vec<f64>) {
        let [n, h, w, _] = x.shape();
        let col = self.im2col(x);
        let rows = n * h * w;
        let plen = self.patch_len();
        let co = self.out_channels;
        let mut out = vec![0.0; rows * co];
        gemm(rows, plen, co, &col, plen as isize, 1, &self.weight, co as isize, 1, 0.0, &mut out);
        (Tensor::new([n, h, w, co], out).expect("conv output shape"), col)
    }

    /// Returns `(dx, dweight)`.
    pub fn backward(&self, dy: &Tensor, col: &[f64], in_shape: [usize; 4]) -> (Tensor, Vec<f64>) {
        let [n, h, w, _] = in_shape;
        let rows = n * h * w;
        let plen = self.patch_len();
        let co = self.out_channels;
        let mut dw = vec![0.0; plen * co];
        // colᵀ · dy
        gemm(plen, rows, co, col, 1, plen as isize, dy.data(), co as isize, 1, 0.0, &mut dw);
        let mut dcol = vec![0.0; rows * plen];
        // dy · Wᵀ
        gemm(rows, co, plen, dy.data(), co as isize, 1, &self.weight, 1, co as isize, 0.0, &mut dcol);
        (self.col2im(&dcol, in_shape), dw)
    }
}

// ---------------------------------------------------------------------------
// batch normalization

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    train: bool,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Per-channel mean and biased variance over batch and spatial positions.
    pub fn batch_statistics(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let c = x.channels();
        let m = (x.data().len() / c.max(1)) as f64;
        let mut mean = vec![0.0; c];
        for px in x.data().chunks_exact(c) {
            for (acc, v) in mean.iter_mut().zip(px) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; c];
        for px in x.data().chunks_exact(c) {
            for ((acc, v), mu) in var.iter_mut().zip(px).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        (mean, var)
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> (Tensor, BnCache) {
        let c = self.channels();
        let (mean, var) = if train {
            Self::batch_statistics(x)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.data().len());
        let mut out = Vec::with_capacity(x.data().len());
        for px in x.data().chunks_exact(c) {
            for ch in 0..c {
                let h = (px[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(self.gamma[ch] * h + self.beta[ch]);
            }
        }
        let y = Tensor::new(x.shape(), out).expect("bn output shape");
        (y, BnCache { xhat, inv_std, train, batch_mean: mean, batch_var: var })
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, dy: &Tensor, cache: &BnCache) -> (Tensor, Vec<f64>, Vec<f64>) {
        let c = self.channels();
        let m = (dy.data().len() / c) as f64;
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (g, h) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                dgamma[ch] += g[ch] * h[ch];
                dbeta[ch] += g[ch];
            }
        }
        let mut dx = Vec::with_capacity(dy.data().len());
        if cache.train {
            // dxhat = dy·γ; dx = inv_std/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
            for (g, h) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
                for ch in 0..c {
                    let sum_dxhat = dbeta[ch] * self.gamma[ch];
                    let sum_dxhat_xhat = dgamma[ch] * self.gamma[ch];
                    let dxhat = g[ch] * self.gamma[ch];
                    dx.push(cache.inv_std[ch] / m * (m * dxhat - sum_dxhat - h[ch] * sum_dxhat_xhat));
                }
            }
        } else {
            for g in dy.data().chunks_exact(c) {
                for ch in 0..c {
                    dx.push(g[ch] * self.gamma[ch] * cache.inv_std[ch]);
                }
            }
        }
        (Tensor::new(dy.shape(), dx).expect("bn grad shape"), dgamma, dbeta)
    }

    pub fn update_running(&mut self, cache: &BnCache) {
        if !cache.train {
            return;
        }
        for ch in 0..self.channels() {
            self.running_mean[ch] =
                BN_MOMENTUM * self.running_mean[ch] + (1.0 - BN_MOMENTUM) * cache.batch_mean[ch];
            self.running_var[ch] =
                BN_MOMENTUM * self.running_var[ch] + (1.0 - BN_MOMENTUM) * cache.batch_var[ch];
        }
    }
}

// ---------------------------------------------------------------------------
// activations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Lrelu,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Lrelu, Activation::Sigmoid];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Lrelu => "lrelu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Lrelu => {
                if x > 0.0 {
                    x
                } else {
                    LRELU_SLOPE * x
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Lrelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LRELU_SLOPE
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
        }
    }

    pub fn forward(self, x: &Tensor, fp: &mut Fingerprint) -> Tensor {
        if self != Activation::Sigmoid {
            for chunk in x.data().chunks(64) {
                let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, v)| acc | (u64::from(*v > 0.0) << i));
                fp.mix(bits);
            }
        }
        let data = x.data().iter().map(|&v| self.apply(v)).collect();
        Tensor::new(x.shape(), data).expect("activation shape")
    }

    pub fn backward(self, x: &Tensor, dy: &Tensor) -> Tensor {
        let data = x.data().iter().zip(dy.data()).map(|(&v, &g)| g * self.derivative(v)).collect();
        Tensor::new(x.shape(), data).expect("activation grad shape")
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "lrelu" => Ok(Activation::Lrelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(crate::error::Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// pooling

/// 2×2 max pooling, stride 2. Returns output and flat argmax indices into the input;
/// ties go to the first position in row-major window order.
pub fn maxpool_forward(x: &Tensor, fp: &mut Fingerprint) -> (Tensor, Vec<usize>) {
    let [n, h, w, c] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(n * oh * ow * c);
    let src = x.data();
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let i = ((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch;
                            if best == usize::MAX || src[i] > best_v {
                                best = i;
                                best_v = src[i];
                            }
                        }
                    }
                    out.push(best_v);
                    arg.push(best);
                    fp.mix(best as u64);
                }
            }
        }
    }
    (Tensor::new([n, oh, ow, c], out).expect("pool shape"), arg)
}

pub fn maxpool_backward(dy: &Tensor, argmax: &[usize], in_shape: [usize; 4]) -> Tensor {
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i] += g;
    }
    dx
}

/// Parallel global average and global max pooling, concatenated as `[gap | gmp]`.
pub fn global_pool_forward(x: &Tensor, fp: &mut Fingerprint) -> (Tensor, Vec<usize>) {
    let [n, h, w, c] = x.shape();
    let hw = (h * w) as f64;
    let mut out = Vec::with_capacity(n * 2 * c);
    let mut arg = Vec::with_capacity(n * c);
    for b in 0..n {
        let item = x.item(b);
        let mut sum = vec![0.0; c];
        let mut best = vec![usize::MAX; c];
        for (p, px) in item.chunks_exact(c).enumerate() {
            for ch in 0..c {
                sum[ch] += px[ch];
                if best[ch] == usize::MAX || px[ch] > item[best[ch] * c + ch] {
                    best[ch] = p;
                }
            }
        }
        out.extend(sum.iter().map(|s| s / hw));
        out.extend((0..c).map(|ch| item[best[ch] * c + ch]));
        for &p in &best {
            fp.mix(p as u64);
        }
        arg.extend(best);
    }
    (Tensor::matrix(n, 2 * c, out).expect("global pool shape"), arg)
}

pub fn global_pool_backward(dy: &Tensor, argmax: &[usize], in_shape: [usize; 4]) -> Tensor {
    let [n, h, w, c] = in_shape;
    let hw = h * w;
    let mut dx = Tensor::zeros(in_shape);
    let d = dx.data_mut();
    for b in 0..n {
        let g = dy.row(b);
        let base = b * hw * c;
        for p in 0..hw {
            for ch in 0..c {
                d[base + p * c + ch] = g[ch] / hw as f64;
            }
        }
        for ch in 0..c {
            d[base + argmax[b * c + ch] * c + ch] += g[c + ch];
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// dropout

/// Inverted dropout mask: kept units are scaled by `1/(1-p)`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect()
}

pub fn apply_mask(x: &Tensor, mask: &[f64]) -> Tensor {
    let data = x.data().iter().zip(mask).map(|(v, m)| v * m).collect();
    Tensor::new(x.shape(), data).expect("dropout shape")
}

// ---------------------------------------------------------------------------
// dense + softmax

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `inputs × outputs`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut dyn RngCore) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect();
        Dense { inputs, outputs, weight, bias: vec![0.0; outputs] }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let n = x.batch();
        let mut out: Vec<f64> = (0..n).flat_map(|_| self.bias.iter().copied()).collect();
        gemm(
            n,
            self.inputs,
            self.outputs,
            x.data(),
            self.inputs as isize,
            1,
            &self.weight,
            self.outputs as isize,
            1,
            1.0,
            &mut out,
        );
        Tensor::matrix(n, self.outputs, out).expect("dense shape")
    }

    /// Returns `(dx, dweight, dbias)`.
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let n = x.batch();
        let (i, o) = (self.inputs, self.outputs);
        let mut dw = vec![0.0; i * o];
        gemm(i, n, o, x.data(), 1, i as isize, dy.data(), o as isize, 1, 0.0, &mut dw);
        let mut db = vec![0.0; o];
        for row in dy.data().chunks_exact(o) {
            for (acc, g) in db.iter_mut().zip(row) {
                *acc += g;
            }
        }
        let mut dx = vec![0.0; n * i];
        gemm(n, o, i, dy.data(), o as isize, 1, &self.weight, 1, o as isize, 0.0, &mut dx);
        (Tensor::matrix(n, i, dx).expect("dense grad shape"), dw, db)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let c = logits.item_len();
    let mut out = Vec::with_capacity(logits.data().len());
    for row in logits.data().chunks_exact(c) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / z));
    }
    Tensor::new(logits.shape(), out).expect("softmax shape")
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let n = probs.batch();
    let c = probs.item_len();
    let mut loss = 0.0;
    let mut grad = probs.data().to_vec();
    for (b, &y) in labels.iter().enumerate() {
        loss -= probs.row(b)[y].max(f64::MIN_POSITIVE).ln();
        grad[b * c + y] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g /= n as f64);
    (loss / n as f64, Tensor::new(probs.shape(), grad).expect("ce grad shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn naive_conv(x: &Tensor, conv: &Conv2d) -> Tensor {
        let [n, h, w, c] = x.shape();
        let k = conv.kernel_size;
        let pad = (k / 2) as isize;
        let mut out = Tensor::zeros([n, h, w, conv.out_channels]);
        let mut idx = 0;
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    for o in 0..conv.out_channels {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                for ci in 0..c {
                                    acc += x.at(b, sy as usize, sx as usize, ci)
                                        * conv.weight[((ky * k + kx) * c + ci) * conv.out_channels + o];
                                }
                            }
                        }
                        out.data_mut()[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
        out
    }

    fn random_tensor(shape: [usize; 4], rng: &mut impl RngCore) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input() {
        let mut rng = seeded(1);
        let x = random_tensor([2, 6, 5, 1], &mut rng);
        let mut conv = Conv2d::zeros(3, 1, 1);
        conv.weight[4] = 1.0;
        assert_eq!(conv.forward(&x).0, x);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = seeded(2);
        let x = random_tensor([1, 5, 5, 2], &mut rng);
        for k in [1, 3, 5] {
            let mut conv = Conv2d::zeros(k, 2, 3);
            conv.weight.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let fast = conv.forward(&x).0;
            let slow = naive_conv(&x, &conv);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn global_pool_hand_values() {
        let x = Tensor::new([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = global_pool_forward(&x, &mut Fingerprint::default());
        assert_eq!(y.data(), &[2.5, 4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn gap_backward_uniform_gmp_to_first_argmax() {
        let x = Tensor::new([1, 2, 2, 1], vec![5.0, 1.0, 5.0, 0.0]).unwrap();
        let (_, arg) = global_pool_forward(&x, &mut Fingerprint::default());
        let dy = Tensor::matrix(1, 2, vec![4.0, 0.0]).unwrap();
        let dx = global_pool_backward(&dy, &arg, x.shape());
        assert_eq!(dx.data(), &[1.0, 1.0, 1.0, 1.0]);
        let dy = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let dx = global_pool_backward(&dy, &arg, x.shape());
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_tie_goes_first() {
        let x = Tensor::new([1, 2, 2, 1], vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let (y, arg) = maxpool_forward(&x, &mut Fingerprint::default());
        assert_eq!(y.data(), &[3.0]);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn bn_train_normalizes() {
        let mut rng = seeded(3);
        let x = random_tensor([4, 3, 3, 2], &mut rng);
        let bn = BatchNorm::identity(2);
        let (y, _) = bn.forward(&x, true);
        let (_, var_x) = BatchNorm::batch_statistics(&x);
        let (mean, var) = BatchNorm::batch_statistics(&y);
        for c in 0..2 {
            assert!(mean[c].abs() < 1e-12);
            assert!((var[c] - var_x[c] / (var_x[c] + BN_EPS)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_symmetry_and_shift() {
        let l = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax(&l).data(), &[0.5, 0.5]);
        let a = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let b = Tensor::matrix(1, 3, vec![101.0, 98.0, 100.5]).unwrap();
        for (x, y) in softmax(&a).data().iter().zip(softmax(&b).data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cross_entropy_limits() {
        let p = softmax(&Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let (loss, _) = cross_entropy(&p, &[1]);
        assert!((loss - 2f64.ln()).abs() < 1e-9);
        let p = softmax(&Tensor::matrix(1, 2, vec![20.0, 0.0]).unwrap());
        assert!(cross_entropy(&p, &[0]).0 < 1e-6);
    }

    #[test]
    fn dropout_expectation_matches_eval() {
        let mut rng = seeded(9);
        let p = 0.4;
        let trials = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let v = dropout_mask(1, p, &mut rng)[0] * 2.0;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / trials as f64;
        let sd = (sum_sq / trials as f64 - mean * mean).sqrt();
        let se = sd / (trials as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }
}
