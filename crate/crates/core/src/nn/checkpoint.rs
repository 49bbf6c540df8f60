//! `DPCN` checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DPCN"  u16 version  u64 json_len  json_len bytes of architecture JSON
//! then f64 blobs in declared layer order:
//!   per conv block: bn γ, bn β, bn running mean, bn running var, kernels
//!   head: dense weight (inputs × outputs, row-major), dense bias
//! ```

use super::layers::{BatchNorm, Conv2d, Dense};
use super::model::{BodyLayer, ConvBlock, Head, ModelState};
use crate::error::{Error, Result};
use crate::netbuilder::{ArchSpec, LayerSpec};

pub const MAGIC: &[u8; 4] = b"DPCN";
pub const VERSION: u16 = 1;

pub fn checkpoint_save(model: &ModelState) -> Vec<u8> {
    let json = model.arch().to_json();
    let mut out = Vec::with_capacity(14 + json.len() + 8 * model.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let mut put = |v: &[f64]| {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    for b in model.conv_blocks() {
        put(&b.bn.gamma);
        put(&b.bn.beta);
        put(&b.bn.running_mean);
        put(&b.bn.running_var);
        put(&b.conv.weight);
    }
    if let Some(h) = model.head() {
        put(&h.dense.weight);
        put(&h.dense.bias);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "length mismatch: truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn checkpoint_load(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a DPCN checkpoint".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported DPCN version {version} (expected {VERSION})")));
    }
    let json_len = u64::from_le_bytes(r.take(8, "json length")?.try_into().unwrap());
    let json_len = usize::try_from(json_len).map_err(|_| Error::Checkpoint("json length overflow".into()))?;
    let arch = ArchSpec::from_json(r.take(json_len, "architecture json")?)?;
    let mut body = Vec::new();
    let mut c = arch.input[2];
    for (i, l) in arch.layers[..arch.body_len()].iter().enumerate() {
        match *l {
            LayerSpec::ConvBlock { kernel_size, out_channels, activation } => {
                let what = format!("conv block at layer {i}");
                let gamma = r.floats(c, &what)?;
                let beta = r.floats(c, &what)?;
                let running_mean = r.floats(c, &what)?;
                let running_var = r.floats(c, &what)?;
                let weight = r.floats(kernel_size * kernel_size * c * out_channels, &what)?;
                body.push(BodyLayer::Conv(ConvBlock {
                    bn: BatchNorm { gamma, beta, running_mean, running_var },
                    activation,
                    conv: Conv2d { kernel_size, in_channels: c, out_channels, weight },
                }));
                c = out_channels;
            }
            _ => body.push(BodyLayer::Pool),
        }
    }
    let head = if arch.has_head() {
        let inputs = 2 * c;
        let outputs = arch.num_classes;
        let weight = r.floats(inputs * outputs, "dense weight")?;
        let bias = r.floats(outputs, "dense bias")?;
        Some(Head { dropout_p: arch.dropout_p().unwrap_or(0.0), dense: Dense { inputs, outputs, weight, bias } })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "length mismatch: {} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }
    ModelState::from_parts(arch, body, head)
}
