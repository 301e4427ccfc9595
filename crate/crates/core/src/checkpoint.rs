//! Versioned binary model checkpoints.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes   b"MLCK"
//! version      u32       currently 1
//! kind         u8        0 = linear, 1 = mlp
//! layer_count  u8        L (1 for linear)
//! activations  L bytes   0 = identity, 1 = tanh, 2 = sigmoid
//! dims         (L+1)*u32 d_0 .. d_L
//! matrices     L records of:
//!   name_len   u32
//!   name       utf-8 bytes ("w" for linear, "a1".."aL" for mlp)
//!   rows, cols u64, u64
//!   data       rows*cols f64 bit patterns, row-major
//! ```
//!
//! The float payload stores raw `f64` bits, so save/load round-trips are
//! bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Activation, LinearModel, MlpLayer, MlpModel, Model};

const MAGIC: &[u8; 4] = b"MLCK";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    write_model(model, &mut file)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let mut file = std::fs::File::open(path.as_ref())?;
    read_model(&mut file)
}

pub fn write_model<W: Write>(model: &Model, out: &mut W) -> Result<()> {
    let bytes = encode_model(model);
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_model<R: Read>(input: &mut R) -> Result<Model> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}

/// Hex SHA-256 of the encoded checkpoint, for run manifests.
pub fn model_checksum(model: &Model) -> String {
    let bytes = encode_model(model);
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{:02x}", b)).collect()
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    match model {
        Model::Linear(lin) => {
            out.push(0u8);
            out.push(1u8);
            out.push(Activation::Identity.tag());
            out.extend_from_slice(&(lin.d() as u32).to_le_bytes());
            out.extend_from_slice(&(lin.m() as u32).to_le_bytes());
            encode_matrix(&mut out, "w", lin.weights());
        }
        Model::Mlp(mlp) => {
            let layers = mlp.layers();
            out.push(1u8);
            out.push(layers.len() as u8);
            for layer in layers {
                out.push(layer.act.tag());
            }
            out.extend_from_slice(&(mlp.d() as u32).to_le_bytes());
            for layer in layers {
                out.extend_from_slice(&(layer.a.ncols() as u32).to_le_bytes());
            }
            for (i, layer) in layers.iter().enumerate() {
                encode_matrix(&mut out, &format!("a{}", i + 1), &layer.a);
            }
        }
    }
    out
}

fn encode_matrix(out: &mut Vec<u8>, name: &str, m: &Array2<f64>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[[r, c]].to_bits().to_le_bytes());
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated: wanted {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format("bad checkpoint magic, not an MLCK file".into()));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {} (expected {})",
            version, FORMAT_VERSION
        )));
    }
    let kind = cur.u8()?;
    let layer_count = cur.u8()? as usize;
    if layer_count == 0 {
        return Err(Error::Format("checkpoint declares zero layers".into()));
    }
    let mut acts = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        acts.push(Activation::from_tag(cur.u8()?)?);
    }
    let mut dims = Vec::with_capacity(layer_count + 1);
    for _ in 0..=layer_count {
        dims.push(cur.u32()? as usize);
    }

    let mut matrices = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format("matrix name is not utf-8".into()))?
            .to_string();
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        if rows != dims[i] || cols != dims[i + 1] {
            return Err(Error::Format(format!(
                "matrix `{}` is {}x{} but the dimension chain says {}x{}",
                name,
                rows,
                cols,
                dims[i],
                dims[i + 1]
            )));
        }
        let mut data = Array2::zeros((rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                let bits = cur.u64()?;
                data[[r, c]] = f64::from_bits(bits);
            }
        }
        matrices.push(data);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - cur.pos
        )));
    }

    match kind {
        0 => {
            if layer_count != 1 || acts[0] != Activation::Identity {
                return Err(Error::Format("linear checkpoint must have one identity layer".into()));
            }
            Ok(Model::Linear(LinearModel::new(matrices.pop().unwrap()).map_err(to_format)?))
        }
        1 => {
            let layers: Vec<MlpLayer> = matrices
                .into_iter()
                .zip(acts)
                .map(|(a, act)| MlpLayer { a, act })
                .collect();
            Ok(Model::Mlp(MlpModel::new(layers).map_err(to_format)?))
        }
        other => Err(Error::Format(format!("unknown model kind tag {}", other))),
    }
}

fn to_format(e: Error) -> Error {
    Error::Format(format!("checkpoint payload rejected: {}", e))
}
