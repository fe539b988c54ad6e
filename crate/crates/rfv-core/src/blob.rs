//! Binary blob container used for frames, features, embeddings and
//! checkpoints.
//!
//! Layout: magic `RFVB`, format version u32 LE, element dtype code u32 LE
//! (0 = u8, 1 = f32, 2 = f64), payload byte length u64 LE, then the payload.
//! Float payloads are IEEE-754 little-endian.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RFVB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8 = 0,
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Dtype::U8),
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::invariant(
                "blob-dtype",
                format!("unknown dtype code {other}"),
            )),
        }
    }
}

fn write_header(w: &mut impl Write, dtype: Dtype, payload_len: u64) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(dtype as u32).to_le_bytes())?;
    w.write_all(&payload_len.to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(Dtype, u64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invariant(
            "blob-magic",
            format!("bad magic {magic:?}"),
        ));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    r.read_exact(&mut buf4)?;
    let dtype = Dtype::from_code(u32::from_le_bytes(buf4))?;
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    Ok((dtype, u64::from_le_bytes(buf8)))
}

pub fn write_u8(path: &Path, data: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    write_header(&mut f, Dtype::U8, data.len() as u64)?;
    f.write_all(data)?;
    Ok(())
}

pub fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut f = File::create(path)?;
    write_header(&mut f, Dtype::F32, (data.len() * 4) as u64)?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&bytes)?;
    Ok(())
}

pub fn write_f64(path: &Path, data: &[f64]) -> Result<()> {
    let mut f = File::create(path)?;
    write_header(&mut f, Dtype::F64, (data.len() * 8) as u64)?;
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&bytes)?;
    Ok(())
}

fn read_payload(path: &Path, expect: Dtype) -> Result<Vec<u8>> {
    let mut f = File::open(path)?;
    let (dtype, len) = read_header(&mut f)?;
    if dtype != expect {
        return Err(Error::invariant(
            "blob-dtype",
            format!("expected {expect:?}, found {dtype:?} in {}", path.display()),
        ));
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() as u64 != len {
        return Err(Error::invariant(
            "blob-length",
            format!(
                "{}: header says {len} bytes, file holds {}",
                path.display(),
                payload.len()
            ),
        ));
    }
    Ok(payload)
}

pub fn read_u8(path: &Path) -> Result<Vec<u8>> {
    read_payload(path, Dtype::U8)
}

pub fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let payload = read_payload(path, Dtype::F32)?;
    if payload.len() % 4 != 0 {
        return Err(Error::invariant("blob-length", "f32 payload not 4-aligned"));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_f64(path: &Path) -> Result<Vec<f64>> {
    let payload = read_payload(path, Dtype::F64)?;
    if payload.len() % 8 != 0 {
        return Err(Error::invariant("blob-length", "f64 payload not 8-aligned"));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect())
}
