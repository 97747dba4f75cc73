//! `RAMDEC01` model files.
//!
//! ```text
//! "RAMDEC01"  u32 num_layers  u32 input_dim
//! per layer:  u32 out_dim  u8 activation  f32[out*in] weights (row-major)  f32[out] biases
//! ```
//!
//! Integers and floats are little-endian; activation codes are
//! 0 relu, 1 sigmoid, 2 tanh, 3 softmax.

use std::fs;
use std::path::Path;

use ramdec_core::mlp::{Activation, Layer, MlpModel};

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RAMDEC01";
const MAGIC_STEM: &[u8; 6] = b"RAMDEC";

pub fn to_bytes(model: &MlpModel) -> Vec<u8> {
    let params: usize = model.layers().iter().map(|l| l.weights.len() + l.bias.len()).sum();
    let mut out = Vec::with_capacity(16 + 5 * model.layers().len() + 4 * params);
    out.extend_from_slice(MAGIC);
    out.extend((model.layers().len() as u32).to_le_bytes());
    out.extend((model.input_dim() as u32).to_le_bytes());
    for layer in model.layers() {
        out.extend((layer.out_dim as u32).to_le_bytes());
        out.push(layer.activation.code());
        for v in layer.weights.iter().chain(&layer.bias) {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ModelFile { offset: self.pos, message: message.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| self.err(format!("{what} size overflows")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        r.pos = 0;
        return Err(if magic.starts_with(MAGIC_STEM) {
            r.err(format!("unsupported model version {:?}", String::from_utf8_lossy(&magic[6..])))
        } else {
            r.err("bad magic; not a RAMDEC model file")
        });
    }
    let num_layers = r.u32("layer count")?;
    let input_dim = r.u32("input dimension")?;
    let mut layers = Vec::new();
    let mut in_dim = input_dim;
    for i in 0..num_layers {
        let out_dim = r.u32("layer output dimension")?;
        let code_at = r.pos;
        let code = r.take(1, "activation")?[0];
        let activation = Activation::from_code(code).ok_or(Error::ModelFile {
            offset: code_at,
            message: format!("layer {i}: unknown activation code {code}"),
        })?;
        let n = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| r.err(format!("layer {i}: weight count overflows")))?;
        let weights = r.floats(n, "weights")?;
        let bias = r.floats(out_dim, "biases")?;
        layers.push(Layer { in_dim, out_dim, activation, weights, bias });
        in_dim = out_dim;
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    MlpModel::new(input_dim, layers).map_err(|e| Error::ModelFile { offset: r.pos, message: e.to_string() })
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(Error::io(path))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    from_bytes(&bytes)
}
