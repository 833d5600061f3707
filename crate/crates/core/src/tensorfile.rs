//! The `TCPR` dense tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TCPR"                      4 bytes
//! version                     u32 = 1
//! name length + UTF-8 bytes   u32 + n bytes
//! n_boundaries                u32
//! n_layers                    u32
//! hidden_dim                  u32
//! layer ids                   n_layers x u32
//! values                      n_boundaries x n_layers x hidden_dim x f32
//! ```
//!
//! Activation dumps carry the trajectory id as the name. Feature matrices
//! and probe weights reuse the same container with a single layer.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TCPR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub n_boundaries: usize,
    pub layer_ids: Vec<u32>,
    pub hidden_dim: usize,
    /// Row-major `[boundary][layer][dim]`.
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn n_layers(&self) -> usize {
        self.layer_ids.len()
    }

    pub fn expected_len(&self) -> usize {
        self.n_boundaries * self.layer_ids.len() * self.hidden_dim
    }

    /// A `rows x cols` matrix stored as one pseudo-layer with id 0.
    pub fn matrix(name: &str, rows: usize, cols: usize, values: Vec<f32>) -> Self {
        Tensor {
            name: name.to_string(),
            n_boundaries: rows,
            layer_ids: vec![0],
            hidden_dim: cols,
            values,
        }
    }
}

fn to_u32(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| Error::Format(format!("{what} {x} does not fit in u32")))
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    if t.values.len() != t.expected_len() {
        return Err(Error::Dimension(format!(
            "tensor `{}` holds {} values, header implies {}",
            t.name,
            t.values.len(),
            t.expected_len()
        )));
    }
    let name = t.name.as_bytes();
    let mut out = Vec::with_capacity(28 + name.len() + 4 * t.layer_ids.len() + 4 * t.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(name.len(), "name length")?.to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&to_u32(t.n_boundaries, "n_boundaries")?.to_le_bytes());
    out.extend_from_slice(&to_u32(t.layer_ids.len(), "n_layers")?.to_le_bytes());
    out.extend_from_slice(&to_u32(t.hidden_dim, "hidden_dim")?.to_le_bytes());
    for id in &t.layer_ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for v in &t.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                expected: self.pos.saturating_add(n),
                found: self.buf.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(buf: &[u8]) -> Result<Tensor> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let name_len = r.u32()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|e| Error::Format(format!("name is not UTF-8: {e}")))?
        .to_string();
    let n_boundaries = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let mut layer_ids = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_ids.push(r.u32()?);
    }
    let count = n_boundaries
        .checked_mul(n_layers)
        .and_then(|x| x.checked_mul(hidden_dim))
        .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
    let payload_bytes = count
        .checked_mul(4)
        .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
    let payload = r.take(payload_bytes)?;
    if r.pos != buf.len() {
        return Err(Error::Dimension(format!(
            "{} trailing bytes after declared payload",
            buf.len() - r.pos
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor {
        name,
        n_boundaries,
        layer_ids,
        hidden_dim,
        values,
    })
}

pub fn write(path: &Path, t: &Tensor) -> Result<()> {
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
