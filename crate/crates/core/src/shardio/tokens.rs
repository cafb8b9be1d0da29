// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token stream files: magic "TOKS", u16 version (=1), u16 reserved,
//! u64 count, then `count` little-endian u32 token ids.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const TOKENS_MAGIC: [u8; 4] = *b"TOKS";
const TOKENS_VERSION: u16 = 1;

pub fn write_tokens(tokens: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(Error::io_at(path))?);
    out.write_all(&TOKENS_MAGIC)?;
    out.write_all(&TOKENS_VERSION.to_le_bytes())?;
    out.write_all(&0u16.to_le_bytes())?;
    out.write_all(&(tokens.len() as u64).to_le_bytes())?;
    for t in tokens {
        out.write_all(&t.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(Error::io_at(path))?).read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            expected: 16,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != TOKENS_MAGIC {
        return Err(Error::BadMagic {
            expected: TOKENS_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != TOKENS_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let expected = 16 + n * 4;
    if (bytes.len() as u64) != expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes[16..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
