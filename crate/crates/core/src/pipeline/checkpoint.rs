//! Binary model checkpoints.
//!
//! Layout, all integers `u64` little-endian:
//! `b"CTCLAB01"`, layer count `L` (backbone layers plus the head), then per layer
//! `in`, `out`, `in·out` weights (row-major `f64` LE) and `out` biases. The last
//! layer is the classification head; the backbone uses rectifier activations.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Activation, Backbone, Classifier, Dense, LinearHead, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CTCLAB01";

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_dense(buf: &mut Vec<u8>, d: &Dense) {
    put_u64(buf, d.input_dim() as u64);
    put_u64(buf, d.output_dim() as u64);
    for v in d.weight.as_slice().iter().chain(&d.bias) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &Classifier) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u64(&mut buf, model.backbone.layers().len() as u64 + 1);
    for layer in model.backbone.layers() {
        put_dense(&mut buf, layer);
    }
    put_dense(&mut buf, model.head.layer());
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Data("checkpoint size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Classifier> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a checkpoint (bad magic bytes)".into()));
    }
    let count = c.u64()? as usize;
    if count < 2 {
        return Err(Error::Data(format!("checkpoint holds {count} layers; need at least 2")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let input = c.u64()? as usize;
        let output = c.u64()? as usize;
        let weight = Matrix::new(input, output, c.f64s(input * output)?)?;
        let bias = c.f64s(output)?;
        layers.push(Dense::new(weight, bias)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Data(format!("{} trailing bytes after checkpoint", bytes.len() - c.pos)));
    }
    let head = layers.pop().expect("count ≥ 2");
    let backbone = Backbone::from_layers(layers, Activation::Relu)?;
    Classifier::new(backbone, LinearHead::new(head.weight, head.bias)?)
}

pub fn save_checkpoint(model: &Classifier, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Classifier> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
