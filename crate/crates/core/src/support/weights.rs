//! `UNETW1` weight files.
//!
//! Layout (little-endian): magic `UNETW1\0\0`, `u32` layer count, then per
//! layer `u16` name length, UTF-8 name, `u8` ndim, `u32` dims, `f32` data in
//! row-major order; footer `u32` CRC32 of the concatenated `name:shape`
//! strings, where shape is the dims joined by `x` (e.g. `head.bias:1`).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"UNETW1\0\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Weights(format!(
                "layer {name}: shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }

    fn signature(&self) -> String {
        signature(&self.name, &self.shape)
    }
}

fn signature(name: &str, shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("{name}:{}", dims.join("x"))
}

/// CRC32 of the concatenated `name:shape` strings.
pub fn fingerprint<'a>(layers: impl IntoIterator<Item = (&'a str, &'a [usize])>) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for (name, shape) in layers {
        h.update(signature(name, shape).as_bytes());
    }
    h.finalize()
}

/// Ordered named tensors plus the fingerprint read from (or written to) the footer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    layers: Vec<Tensor>,
    fingerprint: u32,
}

impl NetworkWeights {
    pub fn new(layers: Vec<Tensor>) -> Self {
        let fingerprint = fingerprint(layers.iter().map(|t| (t.name.as_str(), t.shape.as_slice())));
        Self { layers, fingerprint }
    }

    pub fn layers(&self) -> &[Tensor] {
        &self.layers
    }

    pub fn fingerprint(&self) -> u32 {
        self.fingerprint
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.layers.iter().find(|t| t.name == name)
    }

    /// Check names and shapes against `contract`, in order. The error names
    /// the first layer that differs.
    pub fn validate(&self, contract: &[(String, Vec<usize>)]) -> Result<()> {
        for (i, (name, shape)) in contract.iter().enumerate() {
            match self.layers.get(i) {
                None => return Err(Error::Weights(format!("missing layer {name} (expected shape {shape:?})"))),
                Some(t) if &t.name != name || &t.shape != shape => {
                    return Err(Error::Weights(format!(
                        "layer {i} mismatch: expected {}, found {}",
                        signature(name, shape),
                        t.signature()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = self.layers.get(contract.len()) {
            return Err(Error::Weights(format!("unexpected extra layer {}", extra.signature())));
        }
        let expect = fingerprint(contract.iter().map(|(n, s)| (n.as_str(), s.as_slice())));
        if self.fingerprint != expect {
            return Err(Error::Weights(format!(
                "architecture fingerprint {:08x} does not match the contract {:08x}",
                self.fingerprint, expect
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for t in &self.layers {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a UNETW1 file (bad magic)".into()));
        }
        let count = read_u32(&mut r)? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("layer name is not UTF-8".into()))?;
            let mut ndim = [0u8; 1];
            read_exact(&mut r, &mut ndim)?;
            let shape = (0..ndim[0]).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n * 4 > r.len() {
                return Err(Error::Format(format!("layer {name}: data truncated")));
            }
            let (data, rest) = r.split_at(n * 4);
            r = rest;
            let data = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            layers.push(Tensor { name, shape, data });
        }
        let stored = read_u32(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after footer", r.len())));
        }
        let weights = Self::new(layers);
        if weights.fingerprint != stored {
            return Err(Error::Weights(format!(
                "footer fingerprint {stored:08x} does not match the layers ({:08x})",
                weights.fingerprint
            )));
        }
        Ok(weights)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("unexpected end of weight file".into()))
}

fn read_u16(r: &mut &[u8]) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
