use std::path::Path;

use crate::error::{Error, Result};

use super::{read_bytes, write_atomic};

pub const DESCRIPTOR_MAGIC: [u8; 4] = *b"SDVD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Row-major `count x dim` matrix of 32-bit descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptors {
    dim: usize,
    data: Vec<f32>,
}

impl Descriptors {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 && !data.is_empty() || dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&DESCRIPTOR_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                offset: bytes.len(),
                reason: format!("descriptor header needs {HEADER_LEN} bytes"),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != DESCRIPTOR_MAGIC {
            return Err(Error::BadMagic {
                found: magic,
                expected: DESCRIPTOR_MAGIC,
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let count = word(8) as usize;
        let dim = word(12) as usize;
        let payload = &bytes[HEADER_LEN..];
        let expected = (count as u64) * (dim as u64) * 4;
        if (payload.len() as u64) < expected {
            return Err(Error::TruncatedPayload {
                offset: bytes.len(),
                reason: format!("payload of {count}x{dim} floats needs {expected} bytes"),
            });
        }
        if payload.len() as u64 > expected {
            return Err(Error::DimMismatch {
                expected: expected as usize,
                found: payload.len(),
            });
        }
        if count > 0 && dim == 0 {
            return Err(Error::DimMismatch { expected: 1, found: 0 });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { dim, data })
    }
}

pub fn write_descriptors(path: impl AsRef<Path>, descriptors: &Descriptors) -> Result<()> {
    write_atomic(path.as_ref(), &descriptors.to_bytes())
}

pub fn read_descriptors(path: impl AsRef<Path>) -> Result<Descriptors> {
    Descriptors::from_bytes(&read_bytes(path.as_ref())?)
}
