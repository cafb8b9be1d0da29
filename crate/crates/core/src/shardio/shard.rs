// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

use super::source::DatasetCursor;

pub const SHARD_MAGIC: [u8; 4] = *b"ACTS";
pub const SHARD_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 24;
const DTYPE_F32: u8 = 0;
const F32_WIDTH: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShardHeader {
    pub version: u16,
    pub d_in: u32,
    pub d_out: u32,
    pub n_rows: u64,
    pub dtype_code: u8,
}

impl ShardHeader {
    pub fn new(d_in: usize, d_out: usize, n_rows: u64) -> Self {
        Self {
            version: SHARD_VERSION,
            d_in: d_in as u32,
            d_out: d_out as u32,
            n_rows,
            dtype_code: DTYPE_F32,
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in as usize
    }

    pub fn d_out(&self) -> usize {
        self.d_out as usize
    }

    pub fn row_bytes(&self) -> u64 {
        (u64::from(self.d_in) + u64::from(self.d_out)) * F32_WIDTH
    }

    /// Exact file length implied by the header.
    pub fn file_len(&self) -> u64 {
        HEADER_LEN + self.n_rows * self.row_bytes()
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&SHARD_MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..10].copy_from_slice(&self.d_in.to_le_bytes());
        b[10..14].copy_from_slice(&self.d_out.to_le_bytes());
        b[14..22].copy_from_slice(&self.n_rows.to_le_bytes());
        b[22] = self.dtype_code;
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN as usize]) -> Result<Self> {
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != SHARD_MAGIC {
            return Err(Error::BadMagic {
                expected: SHARD_MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes(b[4..6].try_into().unwrap());
        if version != SHARD_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let h = Self {
            version,
            d_in: u32::from_le_bytes(b[6..10].try_into().unwrap()),
            d_out: u32::from_le_bytes(b[10..14].try_into().unwrap()),
            n_rows: u64::from_le_bytes(b[14..22].try_into().unwrap()),
            dtype_code: b[22],
        };
        if h.dtype_code != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(h.dtype_code));
        }
        if h.d_in == 0 || h.d_out == 0 {
            return Err(Error::InvalidConfig("shard dimensions must be >= 1".into()));
        }
        Ok(h)
    }
}

/// One (input, target) pair. For transcoders the target is the MLP output;
/// for autoencoders it is the input itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardRow<T = f32> {
    pub input: Vec<T>,
    pub target: Vec<T>,
}

impl<T: Scalar> ShardRow<T> {
    pub fn new(input: Vec<T>, target: Vec<T>) -> Self {
        Self { input, target }
    }

    pub fn cast<U: Scalar>(&self) -> ShardRow<U> {
        ShardRow {
            input: crate::tensor::cast_vec(&self.input),
            target: crate::tensor::cast_vec(&self.target),
        }
    }

    pub fn is_finite(&self) -> bool {
        crate::tensor::all_finite(&self.input) && crate::tensor::all_finite(&self.target)
    }
}

/// Streaming shard writer. The row count is patched into the header on
/// [`ShardWriter::finish`].
pub struct ShardWriter {
    path: PathBuf,
    out: BufWriter<File>,
    d_in: usize,
    d_out: usize,
    n_rows: u64,
}

impl ShardWriter {
    pub fn create(path: impl AsRef<Path>, d_in: usize, d_out: usize) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::InvalidConfig("shard dimensions must be >= 1".into()));
        }
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(Error::io_at(&path))?;
        let mut out = BufWriter::new(file);
        out.write_all(&ShardHeader::new(d_in, d_out, 0).to_bytes())?;
        Ok(Self {
            path,
            out,
            d_in,
            d_out,
            n_rows: 0,
        })
    }

    pub fn push<T: Scalar>(&mut self, row: &ShardRow<T>) -> Result<()> {
        self.push_parts(&row.input, &row.target)
    }

    pub fn push_parts<T: Scalar>(&mut self, input: &[T], target: &[T]) -> Result<()> {
        check_dim("shard row input", self.d_in, input.len())?;
        check_dim("shard row target", self.d_out, target.len())?;
        for &v in input.iter().chain(target) {
            let v = v.as_f64() as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite("shard row"));
            }
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.n_rows += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> u64 {
        self.n_rows
    }

    /// Patches the header. Writing zero rows is an error and removes the file.
    pub fn finish(mut self) -> Result<ShardHeader> {
        if self.n_rows == 0 {
            drop(self.out);
            let _ = std::fs::remove_file(&self.path);
            return Err(Error::ZeroRows);
        }
        let header = ShardHeader::new(self.d_in, self.d_out, self.n_rows);
        self.out.seek(SeekFrom::Start(0))?;
        self.out.write_all(&header.to_bytes())?;
        self.out.flush()?;
        Ok(header)
    }
}

/// Writes all rows to `path`. Dimensions are taken from the first row.
pub fn write_shard<T, I>(rows: I, path: impl AsRef<Path>) -> Result<ShardHeader>
where
    T: Scalar,
    I: IntoIterator<Item = ShardRow<T>>,
{
    let mut rows = rows.into_iter();
    let first = rows.next().ok_or(Error::ZeroRows)?;
    let mut w = ShardWriter::create(path, first.input.len(), first.target.len())?;
    let write_all = || -> Result<()> {
        w.push(&first)?;
        for row in rows {
            w.push(&row)?;
        }
        Ok(())
    };
    match write_all() {
        Ok(()) => w.finish(),
        Err(e) => {
            drop(w.out);
            let _ = std::fs::remove_file(&w.path);
            Err(e)
        }
    }
}

/// Sequential reader over one shard file. Holds one row buffer, so memory
/// use is independent of `n_rows`.
pub struct ShardReader {
    header: ShardHeader,
    inner: BufReader<File>,
    remaining: u64,
    buf: Vec<u8>,
}

impl ShardReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(Error::io_at(path))?;
        let actual = file.metadata().map_err(Error::io_at(path))?.len();
        let mut inner = BufReader::new(file);
        let mut hb = [0u8; HEADER_LEN as usize];
        if actual < HEADER_LEN {
            // Still report a bad magic before a short header when we can.
            let n = inner.read(&mut hb)?;
            if n >= 4 && hb[0..4] != SHARD_MAGIC {
                return Err(Error::BadMagic {
                    expected: SHARD_MAGIC,
                    found: hb[0..4].try_into().unwrap(),
                });
            }
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                actual,
            });
        }
        inner.read_exact(&mut hb)?;
        let header = ShardHeader::from_bytes(&hb)?;
        let expected = header.file_len();
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(Error::TrailingBytes { expected, actual });
        }
        Ok(Self {
            header,
            inner,
            remaining: header.n_rows,
            buf: vec![0u8; header.row_bytes() as usize],
        })
    }

    pub fn header(&self) -> &ShardHeader {
        &self.header
    }

    /// Reads the next row into caller-provided buffers. Returns `false` at end.
    pub fn read_into<T: Scalar>(&mut self, input: &mut Vec<T>, target: &mut Vec<T>) -> Result<bool> {
        if self.remaining == 0 {
            return Ok(false);
        }
        self.inner.read_exact(&mut self.buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    expected: self.header.file_len(),
                    actual: self.header.file_len() - self.remaining * self.header.row_bytes(),
                }
            } else {
                Error::Io(e)
            }
        })?;
        self.remaining -= 1;
        let d_in = self.header.d_in();
        input.clear();
        target.clear();
        for (i, chunk) in self.buf.chunks_exact(4).enumerate() {
            let v = T::from_f32_exact(f32::from_le_bytes(chunk.try_into().unwrap()));
            if i < d_in {
                input.push(v);
            } else {
                target.push(v);
            }
        }
        Ok(true)
    }
}

impl Iterator for ShardReader {
    type Item = Result<ShardRow<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut input = Vec::with_capacity(self.header.d_in());
        let mut target = Vec::with_capacity(self.header.d_out());
        match self.read_into(&mut input, &mut target) {
            Ok(true) => Some(Ok(ShardRow { input, target })),
            Ok(false) => None,
            Err(e) => {
                self.remaining = 0;
                Some(Err(e))
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<(ShardHeader, ShardReader)> {
    let r = ShardReader::open(path)?;
    Ok((*r.header(), r))
}

/// One or more shard files with matching dimensions, read in lexicographic
/// path order.
#[derive(Debug, Clone)]
pub struct ShardDataset {
    files: Vec<(PathBuf, ShardHeader)>,
    d_in: usize,
    d_out: usize,
    n_rows: u64,
}

impl ShardDataset {
    pub fn open<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut paths: Vec<PathBuf> = paths.iter().map(|p| p.as_ref().to_path_buf()).collect();
        if paths.is_empty() {
            return Err(Error::ZeroRows);
        }
        paths.sort();
        let mut files = Vec::with_capacity(paths.len());
        for p in paths {
            let header = *ShardReader::open(&p)?.header();
            files.push((p, header));
        }
        let (d_in, d_out) = (files[0].1.d_in(), files[0].1.d_out());
        for (_, h) in &files[1..] {
            check_dim("dataset d_in", d_in, h.d_in())?;
            check_dim("dataset d_out", d_out, h.d_out())?;
        }
        let n_rows = files.iter().map(|(_, h)| h.n_rows).sum();
        Ok(Self {
            files,
            d_in,
            d_out,
            n_rows,
        })
    }

    /// A single shard file, or every `*.acts` file in a directory.
    pub fn open_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            let mut found = Vec::new();
            for entry in std::fs::read_dir(path).map_err(Error::io_at(path))? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "acts") {
                    found.push(p);
                }
            }
            Self::open(&found)
        } else {
            Self::open(&[path])
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn cursor<T: Scalar>(&self) -> DatasetCursor<T> {
        DatasetCursor::new(self.clone())
    }

    /// Loads every row into memory. Only for small datasets and tests.
    pub fn read_all<T: Scalar>(&self) -> Result<Vec<ShardRow<T>>> {
        let mut rows = Vec::with_capacity(self.n_rows as usize);
        for p in self.paths() {
            for row in ShardReader::open(p)? {
                rows.push(row?.cast());
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_rows() -> Vec<ShardRow<f32>> {
        vec![
            ShardRow::new(vec![1.0, 2.0, 3.0], vec![4.0, 5.0]),
            ShardRow::new(vec![-1.0, 0.5, 0.25], vec![0.0, -8.0]),
        ]
    }

    #[test]
    fn header_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.acts");
        let h = write_shard(two_rows(), &p).unwrap();
        assert_eq!((h.d_in, h.d_out, h.n_rows), (3, 2, 2));
        assert_eq!(std::fs::metadata(&p).unwrap().len(), h.file_len());
        assert_eq!(h.file_len(), 24 + 2 * 5 * 4);

        let (h2, reader) = read_shard(&p).unwrap();
        assert_eq!(h, h2);
        let rows: Vec<_> = reader.collect::<Result<_>>().unwrap();
        assert_eq!(rows, two_rows());
    }

    #[test]
    fn header_byte_layout() {
        let b = ShardHeader::new(3, 2, 7).to_bytes();
        assert_eq!(&b[0..4], b"ACTS");
        assert_eq!(b[4..6], [1, 0]);
        assert_eq!(b[6..10], [3, 0, 0, 0]);
        assert_eq!(b[10..14], [2, 0, 0, 0]);
        assert_eq!(b[14..22], [7, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(b[22..24], [0, 0]);
    }

    #[test]
    fn zero_rows_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.acts");
        let err = write_shard(Vec::<ShardRow<f32>>::new(), &p).unwrap_err();
        assert!(matches!(err, Error::ZeroRows));
        assert_eq!(err.to_string(), "zero rows");
        assert!(!p.exists());
    }

    #[test]
    fn row_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = two_rows();
        rows[1].target.push(1.0);
        let err = write_shard(rows, dir.path().join("x.acts")).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { .. }));
    }

    #[test]
    fn non_finite_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = two_rows();
        rows[0].input[1] = f32::NAN;
        let err = write_shard(rows, dir.path().join("x.acts")).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.acts");
        write_shard(two_rows(), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        std::fs::write(&p, bytes).unwrap();
        let err = read_shard(&p).err().unwrap();
        assert!(err.to_string().starts_with("bad magic"), "{err}");
    }

    #[test]
    fn truncated_mid_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.acts");
        write_shard(two_rows(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 6]).unwrap();
        let err = read_shard(&p).err().unwrap();
        assert!(matches!(err, Error::Truncated { .. }));
        assert!(err.to_string().starts_with("truncated"));
    }

    #[test]
    fn unsupported_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.acts");
        write_shard(two_rows(), &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[22] = 3;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_shard(&p).err().unwrap(), Error::UnsupportedDtype(3)));
    }

    #[test]
    fn dataset_orders_files_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        let rows = two_rows();
        write_shard(vec![rows[1].clone()], dir.path().join("b.acts")).unwrap();
        write_shard(vec![rows[0].clone()], dir.path().join("a.acts")).unwrap();
        let ds = ShardDataset::open_path(dir.path()).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.read_all::<f32>().unwrap(), rows);
    }

    #[test]
    fn dataset_rejects_mixed_dims() {
        let dir = tempfile::tempdir().unwrap();
        write_shard(two_rows(), dir.path().join("a.acts")).unwrap();
        write_shard(
            vec![ShardRow::new(vec![1.0f32], vec![1.0])],
            dir.path().join("b.acts"),
        )
        .unwrap();
        assert!(ShardDataset::open_path(dir.path()).is_err());
    }
}
