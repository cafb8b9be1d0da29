// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named-tensor archive used for checkpoints, toy models and planted
//! dictionaries.
//!
//! ```text
//! 0..4    magic "TCKP"
//! 4..6    version (u16, = 1)
//! 6..8    reserved
//! 8..16   meta length in bytes (u64)
//! 16..    meta: UTF-8 JSON {"kind", "dtype", "tensors": [{"name", "shape"}], "body"}
//! then    tensor payloads in the order listed, row-major, little-endian,
//!         element width given by "dtype" (f32 or f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Matrix;

const ARCHIVE_MAGIC: [u8; 4] = *b"TCKP";
const ARCHIVE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchiveMeta {
    kind: String,
    dtype: Dtype,
    tensors: Vec<TensorEntry>,
    body: serde_json::Value,
}

/// Structured metadata plus named dense tensors.
///
/// Values are held as `f64`, which represents every `f32` and `f64`
/// exactly, so storing in the writer's native dtype round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    pub kind: String,
    pub dtype: Dtype,
    pub body: serde_json::Value,
    tensors: Vec<(TensorEntry, Vec<f64>)>,
}

impl TensorArchive {
    pub fn new(kind: impl Into<String>, dtype: Dtype, body: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            dtype,
            body,
            tensors: Vec::new(),
        }
    }

    pub fn push<T: Scalar>(&mut self, name: &str, shape: &[usize], data: &[T]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push((
            TensorEntry {
                name: name.to_owned(),
                shape: shape.to_vec(),
            },
            data.iter().map(|x| x.as_f64()).collect(),
        ));
    }

    pub fn push_matrix<T: Scalar>(&mut self, name: &str, m: &Matrix<T>) {
        self.push(name, &m.shape(), m.as_slice());
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(e, _)| e.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|(e, _)| e.name == name)
    }

    /// Removes a tensor. Used by tests that corrupt archives.
    pub fn remove(&mut self, name: &str) -> bool {
        let before = self.tensors.len();
        self.tensors.retain(|(e, _)| e.name != name);
        before != self.tensors.len()
    }

    fn get(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let (entry, data) = self
            .tensors
            .iter()
            .find(|(e, _)| e.name == name)
            .ok_or_else(|| Error::MissingTensor(name.to_owned()))?;
        if entry.shape != shape {
            return Err(Error::ShapeMismatch {
                name: name.to_owned(),
                expected: shape.to_vec(),
                got: entry.shape.clone(),
            });
        }
        Ok(data)
    }

    pub fn vector<T: Scalar>(&self, name: &str, len: usize) -> Result<Vec<T>> {
        Ok(self.get(name, &[len])?.iter().map(|&x| T::lit(x)).collect())
    }

    pub fn matrix<T: Scalar>(&self, name: &str, rows: usize, cols: usize) -> Result<Matrix<T>> {
        let data = self.get(name, &[rows, cols])?.iter().map(|&x| T::lit(x)).collect();
        Matrix::from_vec(rows, cols, data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = ArchiveMeta {
            kind: self.kind.clone(),
            dtype: self.dtype,
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
            body: self.body.clone(),
        };
        let meta = serde_json::to_vec_pretty(&meta)?;
        let payload: usize = self.tensors.iter().map(|(_, d)| d.len()).sum();
        let mut out = Vec::with_capacity(16 + meta.len() + payload * self.dtype.width());
        out.extend_from_slice(&ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        for (_, data) in &self.tensors {
            for &x in data {
                match self.dtype {
                    Dtype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
                    Dtype::F64 => out.extend_from_slice(&x.to_le_bytes()),
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let short = |expected: usize| Error::Truncated {
            expected: expected as u64,
            actual: bytes.len() as u64,
        };
        if bytes.len() < 16 {
            return Err(short(16));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != ARCHIVE_MAGIC {
            return Err(Error::BadMagic {
                expected: ARCHIVE_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != ARCHIVE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let meta_end = 16 + meta_len;
        if bytes.len() < meta_end {
            return Err(short(meta_end));
        }
        let meta: ArchiveMeta = serde_json::from_slice(&bytes[16..meta_end])?;
        let width = meta.dtype.width();
        let total: usize = meta
            .tensors
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        let expected = meta_end + total * width;
        if bytes.len() < expected {
            return Err(short(expected));
        }
        if bytes.len() > expected {
            return Err(Error::TrailingBytes {
                expected: expected as u64,
                actual: bytes.len() as u64,
            });
        }
        let mut pos = meta_end;
        let mut tensors = Vec::with_capacity(meta.tensors.len());
        for entry in meta.tensors {
            let n: usize = entry.shape.iter().product();
            let data = bytes[pos..pos + n * width]
                .chunks_exact(width)
                .map(|c| match meta.dtype {
                    Dtype::F32 => f64::from(f32::from_le_bytes(c.try_into().unwrap())),
                    Dtype::F64 => f64::from_le_bytes(c.try_into().unwrap()),
                })
                .collect();
            pos += n * width;
            tensors.push((entry, data));
        }
        Ok(Self {
            kind: meta.kind,
            dtype: meta.dtype,
            body: meta.body,
            tensors,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = BufWriter::new(File::create(path).map_err(Error::io_at(path))?);
        out.write_all(&self.to_bytes()?)?;
        out.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(Error::io_at(path))?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "expected a {kind} archive, found {}",
                self.kind
            )))
        }
    }
}
