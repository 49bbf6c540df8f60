//! A built network with its parameters: forward, backward and parameter access.

use rand::RngCore;

use super::layers::{
    apply_mask, cross_entropy, dropout_mask, global_pool_backward, global_pool_forward,
    maxpool_backward, maxpool_forward, softmax, Activation, BatchNorm, BnCache, Conv2d, Dense,
    Fingerprint,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::netbuilder::{ArchSpec, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub bn: BatchNorm,
    pub activation: Activation,
    pub conv: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BodyLayer {
    Conv(ConvBlock),
    Pool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub dropout_p: f64,
    pub dense: Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKind {
    BnGamma,
    BnBeta,
    ConvKernel,
    DenseWeight,
    DenseBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    arch: ArchSpec,
    body: Vec<BodyLayer>,
    head: Option<Head>,
    pub train_mode: bool,
}

enum BodyCache {
    Conv { bn: BnCache, pre_act: Tensor, col: Vec<f64>, in_shape: [usize; 4] },
    Pool { argmax: Vec<usize>, in_shape: [usize; 4] },
}

struct HeadCache {
    pool_argmax: Vec<usize>,
    pooled: Tensor,
    mask: Option<Vec<f64>>,
    dense_in: Tensor,
}

/// Everything a backward pass needs, plus the outputs.
pub struct ForwardPass {
    pub probs: Tensor,
    pub logits: Tensor,
    /// Activation entering the global pooling head.
    pub features: Tensor,
    /// Hash of the discrete branch choices (activation signs, pooling argmaxes).
    pub fingerprint: u64,
    body: Vec<BodyCache>,
    head: Option<HeadCache>,
}

/// Gradients aligned with [`ModelState::params`].
pub type Grads = Vec<Vec<f64>>;

impl ModelState {
    /// Assemble a model; shapes are checked against `arch`.
    pub fn from_parts(arch: ArchSpec, body: Vec<BodyLayer>, head: Option<Head>) -> Result<Self> {
        arch.validate()?;
        let model = ModelState { arch, body, head, train_mode: false };
        model.check_consistency()?;
        Ok(model)
    }

    /// Random initialization: Glorot-uniform convolutions and dense head, identity BN.
    pub fn random(arch: ArchSpec, rng: &mut dyn RngCore) -> Result<Self> {
        arch.validate()?;
        let mut body = Vec::new();
        let mut c = arch.input[2];
        for l in &arch.layers[..arch.body_len()] {
            match *l {
                LayerSpec::ConvBlock { kernel_size, out_channels, activation } => {
                    let mut conv = Conv2d::zeros(kernel_size, c, out_channels);
                    let fan_in = kernel_size * kernel_size * c;
                    let fan_out = kernel_size * kernel_size * out_channels;
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    conv.weight.iter_mut().for_each(|w| *w = rand::Rng::random_range(rng, -a..a));
                    body.push(BodyLayer::Conv(ConvBlock { bn: BatchNorm::identity(c), activation, conv }));
                    c = out_channels;
                }
                _ => body.push(BodyLayer::Pool),
            }
        }
        let head = arch.has_head().then(|| Head {
            dropout_p: arch.dropout_p().unwrap_or(0.0),
            dense: Dense::glorot(2 * c, arch.num_classes, rng),
        });
        Self::from_parts(arch, body, head)
    }

    fn check_consistency(&self) -> Result<()> {
        let arch = &self.arch;
        let body_specs = &arch.layers[..arch.body_len()];
        if body_specs.len() != self.body.len() {
            return Err(Error::invalid("model body does not match architecture"));
        }
        let mut c = arch.input[2];
        for (i, (spec, layer)) in body_specs.iter().zip(&self.body).enumerate() {
            match (spec, layer) {
                (LayerSpec::ConvBlock { kernel_size, out_channels, activation }, BodyLayer::Conv(b)) => {
                    let conv = &b.conv;
                    if conv.kernel_size != *kernel_size
                        || conv.in_channels != c
                        || conv.out_channels != *out_channels
                        || conv.weight.len() != conv.patch_len() * conv.out_channels
                        || b.bn.channels() != c
                        || b.bn.beta.len() != c
                        || b.bn.running_mean.len() != c
                        || b.bn.running_var.len() != c
                        || b.activation != *activation
                    {
                        return Err(Error::Shape { layer: i, message: "conv block parameters disagree with architecture".into() });
                    }
                    if b.bn.running_var.iter().any(|v| *v < 0.0) {
                        return Err(Error::Shape { layer: i, message: "negative running variance".into() });
                    }
                    c = *out_channels;
                }
                (LayerSpec::Maxpool { .. }, BodyLayer::Pool) => {}
                _ => return Err(Error::Shape { layer: i, message: "layer kind mismatch".into() }),
            }
        }
        match (&self.head, arch.has_head()) {
            (Some(h), true) => {
                let d = &h.dense;
                if d.inputs != 2 * c
                    || d.outputs != arch.num_classes
                    || d.weight.len() != d.inputs * d.outputs
                    || d.bias.len() != d.outputs
                {
                    return Err(Error::Shape { layer: arch.layers.len() - 1, message: "dense head shape mismatch".into() });
                }
            }
            (None, false) => {}
            _ => return Err(Error::invalid("head presence differs from architecture")),
        }
        Ok(())
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn body(&self) -> &[BodyLayer] {
        &self.body
    }

    pub fn head(&self) -> Option<&Head> {
        self.head.as_ref()
    }

    pub fn head_mut(&mut self) -> Option<&mut Head> {
        self.head.as_mut()
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn conv_blocks(&self) -> impl Iterator<Item = &ConvBlock> {
        self.body.iter().filter_map(|l| match l {
            BodyLayer::Conv(b) => Some(b),
            BodyLayer::Pool => None,
        })
    }

    pub fn conv_blocks_mut(&mut self) -> impl Iterator<Item = &mut ConvBlock> {
        self.body.iter_mut().filter_map(|l| match l {
            BodyLayer::Conv(b) => Some(b),
            BodyLayer::Pool => None,
        })
    }

    pub fn set_activation(&mut self, act: Activation) {
        self.arch.set_activation(act);
        for b in self.conv_blocks_mut() {
            b.activation = act;
        }
    }

    pub fn set_dropout(&mut self, p: f64) {
        self.arch.set_dropout(p);
        if let Some(h) = &mut self.head {
            h.dropout_p = p;
        }
    }

    /// Replaces the trace history recorded in the architecture.
    pub fn arch_mut_history(&mut self) -> &mut Vec<(usize, f64)> {
        &mut self.arch.trace_history
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let [_, h, w, c] = x.shape();
        if [h, w, c] != self.arch.input {
            return Err(Error::Shape {
                layer: 0,
                message: format!("input {h}x{w}x{c} does not match architecture input {:?}", self.arch.input),
            });
        }
        Ok(())
    }

    fn run_body(&self, x: &Tensor, mode: Mode, keep: bool, fp: &mut Fingerprint) -> (Tensor, Vec<BodyCache>) {
        let mut caches = Vec::new();
        let mut cur = x.clone();
        for layer in &self.body {
            match layer {
                BodyLayer::Conv(b) => {
                    let (normed, bn_cache) = b.bn.forward(&cur, mode == Mode::Train);
                    let act = b.activation.forward(&normed, fp);
                    let (out, col) = b.conv.forward(&act);
                    if keep {
                        caches.push(BodyCache::Conv { bn: bn_cache, pre_act: normed, col, in_shape: act.shape() });
                    }
                    cur = out;
                }
                BodyLayer::Pool => {
                    let in_shape = cur.shape();
                    let (out, argmax) = maxpool_forward(&cur, fp);
                    if keep {
                        caches.push(BodyCache::Pool { argmax, in_shape });
                    }
                    cur = out;
                }
            }
        }
        (cur, caches)
    }

    /// Body-only forward (no head), e.g. to collect activations during construction.
    pub fn features(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        Ok(self.run_body(x, mode, false, &mut Fingerprint::default()).0)
    }

    /// Full forward with caches. Dropout is active only in train mode with an RNG.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: Option<&mut dyn RngCore>) -> Result<ForwardPass> {
        self.forward_impl(x, mode, rng, true)
    }

    fn forward_impl(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: Option<&mut dyn RngCore>,
        keep: bool,
    ) -> Result<ForwardPass> {
        self.check_input(x)?;
        let head = self.head.as_ref().ok_or_else(|| Error::invalid("model has no classification head"))?;
        let mut fp = Fingerprint::default();
        let (features, body) = self.run_body(x, mode, keep, &mut fp);
        let (pooled, pool_argmax) = global_pool_forward(&features, &mut fp);
        let mask = match (mode, rng) {
            (Mode::Train, Some(rng)) if head.dropout_p > 0.0 => {
                Some(dropout_mask(pooled.data().len(), head.dropout_p, rng))
            }
            _ => None,
        };
        let dense_in = match &mask {
            Some(m) => apply_mask(&pooled, m),
            None => pooled.clone(),
        };
        let logits = head.dense.forward(&dense_in);
        let probs = softmax(&logits);
        let head_cache = keep.then_some(HeadCache { pool_argmax, pooled, mask, dense_in });
        Ok(ForwardPass { probs, logits, features, fingerprint: fp.value(), body, head: head_cache })
    }

    /// Eval-mode class probabilities.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_impl(x, Mode::Eval, None, false)?.probs)
    }

    /// Backpropagate `dlogits`. Returns parameter gradients and the gradient with
    /// respect to [`ForwardPass::features`].
    pub fn backward(&self, pass: &ForwardPass, dlogits: &Tensor) -> Result<(Grads, Tensor)> {
        let head = self.head.as_ref().ok_or_else(|| Error::invalid("model has no classification head"))?;
        let hc = pass.head.as_ref().ok_or(Error::MissingCache(self.arch.layers.len() - 1))?;
        if pass.body.len() != self.body.len() {
            return Err(Error::MissingCache(pass.body.len()));
        }
        let (d_dense_in, dw, db) = head.dense.backward(&hc.dense_in, dlogits);
        let d_pooled = match &hc.mask {
            Some(m) => apply_mask(&d_dense_in, m),
            None => d_dense_in,
        };
        debug_assert_eq!(d_pooled.shape(), hc.pooled.shape());
        let d_features = global_pool_backward(&d_pooled, &hc.pool_argmax, pass.features.shape());

        let mut block_grads: Vec<[Vec<f64>; 3]> = Vec::new();
        let mut grad = d_features.clone();
        for (layer, cache) in self.body.iter().zip(&pass.body).rev() {
            match (layer, cache) {
                (BodyLayer::Conv(b), BodyCache::Conv { bn, pre_act, col, in_shape }) => {
                    let (d_act, d_kernel) = b.conv.backward(&grad, col, *in_shape);
                    let d_norm = b.activation.backward(pre_act, &d_act);
                    let (dx, dgamma, dbeta) = b.bn.backward(&d_norm, bn);
                    block_grads.push([dgamma, dbeta, d_kernel]);
                    grad = dx;
                }
                (BodyLayer::Pool, BodyCache::Pool { argmax, in_shape }) => {
                    grad = maxpool_backward(&grad, argmax, *in_shape);
                }
                _ => return Err(Error::MissingCache(0)),
            }
        }
        let mut grads: Grads = Vec::new();
        for g in block_grads.into_iter().rev() {
            grads.extend(g);
        }
        grads.push(dw);
        grads.push(db);
        Ok((grads, d_features))
    }

    /// Mean cross-entropy and gradients for one batch.
    pub fn loss_and_grad(
        &self,
        x: &Tensor,
        labels: &[usize],
        mode: Mode,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Grads, ForwardPass)> {
        if labels.len() != x.batch() {
            return Err(Error::invalid(format!("{} labels for a batch of {}", labels.len(), x.batch())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.num_classes()) {
            return Err(Error::invalid(format!("label {bad} not below {}", self.num_classes())));
        }
        let pass = self.forward(x, mode, rng)?;
        let (loss, dlogits) = cross_entropy(&pass.probs, labels);
        let (grads, _) = self.backward(&pass, &dlogits)?;
        Ok((loss, grads, pass))
    }

    /// Folds the batch statistics of a train-mode pass into the running estimates.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        let caches = pass.body.iter().filter_map(|c| match c {
            BodyCache::Conv { bn, .. } => Some(bn),
            BodyCache::Pool { .. } => None,
        });
        let blocks: Vec<&mut ConvBlock> = self.conv_blocks_mut().collect();
        for (b, c) in blocks.into_iter().zip(caches) {
            b.bn.update_running(c);
        }
    }

    /// Learnable parameters in declared order: per conv block `γ, β, kernels`, then
    /// dense weight and bias.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in self.conv_blocks() {
            out.push(&b.bn.gamma);
            out.push(&b.bn.beta);
            out.push(&b.conv.weight);
        }
        if let Some(h) = &self.head {
            out.push(&h.dense.weight);
            out.push(&h.dense.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.body {
            if let BodyLayer::Conv(b) = l {
                out.push(&mut b.bn.gamma);
                out.push(&mut b.bn.beta);
                out.push(&mut b.conv.weight);
            }
        }
        if let Some(h) = &mut self.head {
            out.push(&mut h.dense.weight);
            out.push(&mut h.dense.bias);
        }
        out
    }

    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let mut out = Vec::new();
        for _ in self.conv_blocks() {
            out.extend([ParamKind::BnGamma, ParamKind::BnBeta, ParamKind::ConvKernel]);
        }
        if self.head.is_some() {
            out.extend([ParamKind::DenseWeight, ParamKind::DenseBias]);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuilder::LayerSpec;
    use crate::rng::seeded;

    fn tiny_arch() -> ArchSpec {
        ArchSpec {
            input: [8, 8, 1],
            num_classes: 2,
            layers: vec![
                LayerSpec::conv(7, 3, Activation::Relu),
                LayerSpec::maxpool(),
                LayerSpec::Gap,
                LayerSpec::Gmp,
                LayerSpec::Concat,
                LayerSpec::Dropout { p: 0.3 },
                LayerSpec::Softmax { classes: 2 },
            ],
            trace_history: vec![],
        }
    }

    #[test]
    fn probabilities_normalized_and_rows_equal() {
        let model = ModelState::random(tiny_arch(), &mut seeded(0)).unwrap();
        let one: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin().abs()).collect();
        let data: Vec<f64> = one.iter().cycle().take(64 * 3).copied().collect();
        let x = Tensor::new([3, 8, 8, 1], data).unwrap();
        let p = model.predict(&x).unwrap();
        for r in 0..3 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(p.row(r), p.row(0));
        }
    }

    #[test]
    fn wrong_input_shape_names_layer() {
        let model = ModelState::random(tiny_arch(), &mut seeded(0)).unwrap();
        let x = Tensor::zeros([1, 4, 4, 1]);
        assert!(matches!(model.predict(&x), Err(Error::Shape { layer: 0, .. })));
    }

    #[test]
    fn backward_without_cache_fails() {
        let model = ModelState::random(tiny_arch(), &mut seeded(0)).unwrap();
        let x = Tensor::zeros([1, 8, 8, 1]);
        let pass = model.forward_impl(&x, Mode::Eval, None, false).unwrap();
        let d = Tensor::zeros([1, 1, 1, 2]);
        assert!(matches!(model.backward(&pass, &d), Err(Error::MissingCache(_))));
    }

    #[test]
    fn param_layout() {
        let model = ModelState::random(tiny_arch(), &mut seeded(0)).unwrap();
        let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        assert_eq!(sizes, vec![1, 1, 49 * 3, 12, 2]);
        assert_eq!(model.param_kinds().len(), 5);
    }
}
