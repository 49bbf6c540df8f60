use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// BN → activation → convolution.
    ConvBlock { kernel_size: usize, out_channels: usize, activation: Activation },
    Maxpool { window: usize, stride: usize },
    Gap,
    Gmp,
    Concat,
    Dropout { p: f64 },
    /// Dense layer with `classes` outputs followed by softmax.
    Softmax { classes: usize },
}

impl LayerSpec {
    pub fn conv(kernel_size: usize, out_channels: usize, activation: Activation) -> Self {
        LayerSpec::ConvBlock { kernel_size, out_channels, activation }
    }

    pub fn maxpool() -> Self {
        LayerSpec::Maxpool { window: 2, stride: 2 }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::ConvBlock { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    /// `[side, side, channels]`
    pub input: [usize; 3],
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    /// `(layer index m, trace ratio)`, one entry per probed depth including a rejected
    /// final probe.
    pub trace_history: Vec<(usize, f64)>,
}

impl ArchSpec {
    pub fn body(input: [usize; 3], num_classes: usize) -> Self {
        ArchSpec { input, num_classes, layers: Vec::new(), trace_history: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }

    pub fn has_head(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::Softmax { .. }))
    }

    /// Number of body layers (conv blocks and pools) before the head.
    pub fn body_len(&self) -> usize {
        self.layers
            .iter()
            .position(|l| !matches!(l, LayerSpec::ConvBlock { .. } | LayerSpec::Maxpool { .. }))
            .unwrap_or(self.layers.len())
    }

    pub fn last_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::ConvBlock { out_channels, .. } => Some(*out_channels),
                _ => None,
            })
            .unwrap_or(self.input[2])
    }

    pub fn dropout_p(&self) -> Option<f64> {
        self.layers.iter().find_map(|l| match l {
            LayerSpec::Dropout { p } => Some(*p),
            _ => None,
        })
    }

    /// Rewrites every conv block's activation.
    pub fn set_activation(&mut self, act: Activation) {
        for l in &mut self.layers {
            if let LayerSpec::ConvBlock { activation, .. } = l {
                *activation = act;
            }
        }
    }

    pub fn set_dropout(&mut self, p: f64) {
        for l in &mut self.layers {
            if let LayerSpec::Dropout { p: q } = l {
                *q = p;
            }
        }
    }

    /// Structural checks: kernel sizes 7 then 3, pools exactly after conv blocks 1 and 2,
    /// and, when present, the head `gap, gmp, concat, dropout, softmax`.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(format!("invalid architecture: {msg}")));
        let [h, w, c] = self.input;
        if h != w || h == 0 || h % 4 != 0 {
            return bad(format!("input side {h}x{w} must be square and a multiple of 4"));
        }
        if c != 1 && c != 3 {
            return bad(format!("input channels {c} must be 1 or 3"));
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes {} < 2", self.num_classes));
        }
        let body = self.body_len();
        let mut convs = 0;
        let mut expect_pool = false;
        for (i, l) in self.layers[..body].iter().enumerate() {
            match l {
                LayerSpec::ConvBlock { kernel_size, out_channels, .. } => {
                    if expect_pool {
                        return bad(format!("layer {i}: maxpool expected after conv block {convs}"));
                    }
                    convs += 1;
                    let want = if convs == 1 { 7 } else { 3 };
                    if *kernel_size != want {
                        return bad(format!("layer {i}: conv block {convs} has kernel {kernel_size}, expected {want}"));
                    }
                    if *out_channels == 0 {
                        return bad(format!("layer {i}: zero output channels"));
                    }
                    expect_pool = convs <= 2;
                }
                LayerSpec::Maxpool { window, stride } => {
                    if !expect_pool {
                        return bad(format!("layer {i}: maxpool allowed only after conv blocks 1 and 2"));
                    }
                    if (*window, *stride) != (2, 2) {
                        return bad(format!("layer {i}: maxpool must be 2x2 stride 2"));
                    }
                    expect_pool = false;
                }
                _ => unreachable!(),
            }
        }
        if expect_pool {
            return bad(format!("missing maxpool after conv block {convs}"));
        }
        let head = &self.layers[body..];
        if !head.is_empty() {
            if convs == 0 {
                return bad("head without conv body".into());
            }
            let ok = matches!(
                head,
                [LayerSpec::Gap, LayerSpec::Gmp, LayerSpec::Concat, LayerSpec::Dropout { p }, LayerSpec::Softmax { classes }]
                    if (0.0..1.0).contains(p) && *classes == self.num_classes
            );
            if !ok {
                return bad("head must be gap, gmp, concat, dropout(p<1), softmax(num_classes)".into());
            }
        }
        for (m, tr) in &self.trace_history {
            if !tr.is_finite() || *m == 0 {
                return bad(format!("trace history entry ({m}, {tr}) invalid"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("architecture serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let arch: ArchSpec = serde_json::from_slice(bytes).map_err(|e| {
            Error::Format(format!("architecture json: {e} (line {}, column {})", e.line(), e.column()))
        })?;
        arch.validate()?;
        Ok(arch)
    }
}

pub fn save_arch(arch: &ArchSpec) -> Vec<u8> {
    arch.to_json()
}

pub fn load_arch(bytes: &[u8]) -> Result<ArchSpec> {
    ArchSpec::from_json(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub learnable_parameters: u64,
    pub flops: u64,
}

/// Parameter and FLOP counts for one forward pass of a single input.
///
/// Convolutions carry no bias. A multiply-add counts as 2 FLOPs; BN costs 2 per
/// element, activations and pooling 1 per input element.
pub fn count_complexity(arch: &ArchSpec) -> Result<ComplexityReport> {
    if !arch.has_head() || arch.depth() == 0 {
        return Err(Error::invalid("complexity needs a complete architecture with head"));
    }
    let [mut h, mut w, mut c] = arch.input.map(|v| v as u64);
    let mut params = 0u64;
    let mut flops = 0u64;
    let mut pooled = 0u64;
    for l in &arch.layers {
        match *l {
            LayerSpec::ConvBlock { kernel_size, out_channels, .. } => {
                let (k, co) = (kernel_size as u64, out_channels as u64);
                params += 2 * c + k * k * c * co;
                flops += 2 * h * w * c; // bn
                flops += h * w * c; // activation
                flops += 2 * k * k * c * co * h * w;
                c = co;
            }
            LayerSpec::Maxpool { .. } => {
                flops += h * w * c;
                h /= 2;
                w /= 2;
            }
            LayerSpec::Gap | LayerSpec::Gmp => {
                flops += h * w * c;
                pooled += c;
            }
            LayerSpec::Concat => {}
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Softmax { classes } => {
                let o = classes as u64;
                params += pooled * o + o;
                flops += 2 * pooled * o + 3 * o;
            }
        }
    }
    Ok(ComplexityReport { learnable_parameters: params, flops })
}
