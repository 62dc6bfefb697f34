//! Big-endian IDX containers: a 4-byte magic whose low byte is the rank,
//! one u32 extent per dimension, then the raw u8 payload.

use std::fs;
use std::io::{self, ErrorKind};
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub(crate) struct IdxArray {
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(
        path,
        io::Error::new(
            ErrorKind::UnexpectedEof,
            format!("truncated IDX file: {what}"),
        ),
    )
}

pub(crate) fn read_idx(path: &Path, expected_magic: u32) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 {
        return Err(truncated(path, "missing magic"));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if magic != expected_magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("magic 0x{magic:08x}, expected 0x{expected_magic:08x}"),
        });
    }
    let rank = (magic & 0xff) as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(path, "incomplete header"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let numel: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < numel {
        return Err(truncated(
            path,
            &format!("header promises {numel} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > numel {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after payload", payload.len() - numel),
        });
    }
    Ok(IdxArray {
        dims,
        payload: payload.to_vec(),
    })
}

pub(crate) fn write_idx(path: &Path, magic: u32, dims: &[usize], payload: &[u8]) -> Result<()> {
    debug_assert_eq!(dims.len(), (magic & 0xff) as usize);
    debug_assert_eq!(dims.iter().product::<usize>(), payload.len());
    let mut bytes = Vec::with_capacity(4 + 4 * dims.len() + payload.len());
    bytes.extend_from_slice(&magic.to_be_bytes());
    for &d in dims {
        bytes.extend_from_slice(&(d as u32).to_be_bytes());
    }
    bytes.extend_from_slice(payload);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
