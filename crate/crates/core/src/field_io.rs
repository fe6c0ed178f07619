//! CMAF1 binary field dumps.
//!
//! Layout: the five bytes `C M A F 0x01`, then little-endian `u32 n`,
//! `u32 N`, `u64 count = N^{2n}`, then `count` little-endian `f64` samples in
//! grid order (last axis fastest).

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 5] = *b"CMAF\x01";
const HEADER_LEN: usize = 5 + 4 + 4 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldHeader {
    pub dim: u32,
    pub size: u32,
    pub count: u64,
}

pub fn encode(field: &ScalarField) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.size() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.len() as u64).to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<FieldHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file too short for a header ({} bytes)", bytes.len())));
    }
    if bytes[..5] != MAGIC {
        return Err(Error::Format("bad magic, expected CMAF\\x01".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let header = FieldHeader {
        dim: word(5),
        size: word(9),
        count: u64::from_le_bytes(bytes[13..21].try_into().unwrap()),
    };
    let expected = (header.size as u64).checked_pow(2 * header.dim);
    if expected != Some(header.count) {
        return Err(Error::Format(format!(
            "count {} does not match N^(2n) for n = {}, N = {}",
            header.count, header.dim, header.size
        )));
    }
    Ok(header)
}

pub fn decode(bytes: &[u8]) -> Result<ScalarField> {
    let header = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != 8 * header.count {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            8 * header.count,
            body.len()
        )));
    }
    let grid = Grid::new(header.dim as usize, header.size as usize)?;
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::new(&grid, values)
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    decode(&fs::read(path)?)
}

pub fn read_header(path: &Path) -> Result<FieldHeader> {
    let mut buf = [0u8; HEADER_LEN];
    let mut file = fs::File::open(path)?;
    file.read_exact(&mut buf)
        .map_err(|_| Error::Format("file too short for a header".into()))?;
    decode_header(&buf)
}
