use log::{info, warn};
use rand::RngCore;

use super::arch::{ArchSpec, LayerSpec};
use super::trace::trace_ratio;
use crate::error::{Error, Result};
use crate::nn::{
    maxpool_forward, Activation, BatchNorm, BodyLayer, ConvBlock, Conv2d, Dense, Fingerprint, Head,
    ModelState, Tensor,
};
use crate::pca_kernels::{derive_kernel_bank_with, extract_blocks, KernelOptions};
use crate::representatives::RepresentativeSet;

pub const FIRST_KERNEL: usize = 7;
pub const LATER_KERNEL: usize = 3;
pub const DEFAULT_DEPTH_CAP: usize = 32;
pub const MIN_SPATIAL: usize = 3;
/// Conv blocks followed by a 2×2 max pool.
pub const POOLED_BLOCKS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowOptions {
    pub activation: Activation,
    pub depth_cap: usize,
    pub min_spatial: usize,
    pub kernels: KernelOptions,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions {
            activation: Activation::Relu,
            depth_cap: DEFAULT_DEPTH_CAP,
            min_spatial: MIN_SPATIAL,
            kernels: KernelOptions::default(),
        }
    }
}

fn flatten(t: &Tensor) -> Vec<&[f64]> {
    (0..t.batch()).map(|n| t.item(n)).collect()
}

/// Grows the body block by block from the representatives and returns it as a
/// headless model with PCA kernels and construction-time BN statistics.
pub fn grow_network(reps: &RepresentativeSet, epsilon: f64, opts: &GrowOptions) -> Result<ModelState> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon out of range: {epsilon} not in (0,1]")));
    }
    if reps.classes_present() < 2 {
        return Err(Error::SingleClass);
    }
    let x = Tensor::from_images(&reps.images)?;
    let labels = reps.labels();
    let [_, h, w, c] = x.shape();
    if h != w || h % 4 != 0 {
        return Err(Error::invalid(format!("representatives are {h}x{w}; need square with side a multiple of 4")));
    }
    let mut arch = ArchSpec::body([h, w, c], reps.num_classes);
    let mut body: Vec<BodyLayer> = Vec::new();
    let mut current = x;
    let mut prev_tr: Option<f64> = None;
    let mut m = 1;
    loop {
        if m > opts.depth_cap {
            warn!("depth cap {} reached", opts.depth_cap);
            break;
        }
        let k = if m == 1 { FIRST_KERNEL } else { LATER_KERNEL };
        let side = current.shape()[1];
        let out_side = if m <= POOLED_BLOCKS { side / 2 } else { side };
        if side < k || out_side < opts.min_spatial {
            if m == 1 {
                return Err(Error::invalid(format!("input side {side} too small for the first block")));
            }
            warn!("spatial size {side} too small for block {m}; keeping depth {}", m - 1);
            break;
        }
        let bank = match extract_blocks(&current, k, k).and_then(|p| derive_kernel_bank_with(&p, epsilon, opts.kernels)) {
            Ok(b) => b,
            Err(e) if m > 1 => {
                warn!("block {m}: {e}; keeping depth {}", m - 1);
                break;
            }
            Err(e) => return Err(e),
        };
        let c_in = current.channels();
        let mut bn = BatchNorm::identity(c_in);
        let (mean, var) = BatchNorm::batch_statistics(&current);
        bn.running_mean = mean;
        bn.running_var = var;
        let mut conv = Conv2d::zeros(k, c_in, bank.len());
        for (j, kernel) in bank.kernels.iter().enumerate() {
            conv.set_kernel(j, kernel);
        }
        let block = ConvBlock { bn, activation: opts.activation, conv };
        let mut fp = Fingerprint::default();
        let (normed, _) = block.bn.forward(&current, false);
        let act = block.activation.forward(&normed, &mut fp);
        let mut out = block.conv.forward(&act).0;
        if m <= POOLED_BLOCKS {
            out = maxpool_forward(&out, &mut fp).0;
        }
        let tr = trace_ratio(&flatten(&out), &labels)?.tr;
        if !tr.is_finite() {
            return Err(Error::invalid(format!("block {m}: non-finite trace ratio")));
        }
        arch.trace_history.push((m, tr));
        info!("block {m}: kernel {k}, width {} (L = {}), TR = {tr:.6e}", bank.len(), bank.selected_count);
        if let Some(p) = prev_tr {
            if tr < p {
                info!("TR decreased at block {m}; depth {}", m - 1);
                break;
            }
        }
        arch.layers.push(LayerSpec::conv(k, bank.len(), opts.activation));
        body.push(BodyLayer::Conv(block));
        if m <= POOLED_BLOCKS {
            arch.layers.push(LayerSpec::maxpool());
            body.push(BodyLayer::Pool);
        }
        current = out;
        prev_tr = Some(tr);
        m += 1;
    }
    // ties keep growing, but the retained depth is the first maximum of TR
    let depth = arch.depth();
    if let Some(best) = prev_tr {
        let keep = arch.trace_history[..depth].iter().position(|&(_, t)| t == best).map_or(depth, |i| i + 1);
        if keep < depth {
            info!("TR plateau from block {keep}; depth {keep}");
            let len = keep + keep.min(POOLED_BLOCKS);
            arch.layers.truncate(len);
            body.truncate(len);
        }
    }
    ModelState::from_parts(arch, body, None)
}

/// Body architecture only; see [`grow_network`].
pub fn grow_architecture(reps: &RepresentativeSet, epsilon: f64) -> Result<ArchSpec> {
    Ok(grow_network(reps, epsilon, &GrowOptions::default())?.arch().clone())
}

/// Appends `gap, gmp, concat, dropout(p), softmax(C)` to a body.
pub fn finalize_head(body: &ArchSpec, num_classes: usize, dropout_p: f64) -> Result<ArchSpec> {
    if body.depth() == 0 {
        return Err(Error::invalid("cannot attach a head to an empty body"));
    }
    if body.has_head() {
        return Err(Error::invalid("architecture already has a head"));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::invalid(format!("dropout probability {dropout_p} not in [0,1)")));
    }
    if !(0.25..=0.5).contains(&dropout_p) {
        warn!("dropout probability {dropout_p} outside the searched range [0.25, 0.5]");
    }
    let mut arch = body.clone();
    arch.num_classes = num_classes;
    arch.layers.extend([
        LayerSpec::Gap,
        LayerSpec::Gmp,
        LayerSpec::Concat,
        LayerSpec::Dropout { p: dropout_p },
        LayerSpec::Softmax { classes: num_classes },
    ]);
    arch.validate()?;
    Ok(arch)
}

/// Adds the head to a grown body model, drawing the dense weights Glorot-uniform.
pub fn attach_head(body: &ModelState, dropout_p: f64, rng: &mut dyn RngCore) -> Result<ModelState> {
    let arch = finalize_head(body.arch(), body.num_classes(), dropout_p)?;
    let dense = Dense::glorot(2 * arch.last_channels(), arch.num_classes, rng);
    ModelState::from_parts(arch, body.body().to_vec(), Some(Head { dropout_p, dense }))
}
