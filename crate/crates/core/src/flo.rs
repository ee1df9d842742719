//! Middlebury `.flo` files.
//!
//! Layout, all little-endian: the `f32` tag `202021.25` (bytes `PIEH`), the
//! `i32` width and height, then row-major interleaved `(u, v)` as `f32`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn read_4(bytes: &[u8], offset: usize, what: &str) -> Result<[u8; 4]> {
    bytes
        .get(offset..offset + 4)
        .map(|b| b.try_into().expect("4 bytes"))
        .ok_or_else(|| Error::Format {
            offset: offset as u64,
            message: format!("truncated file while reading {what}"),
        })
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let magic = f32::from_le_bytes(read_4(bytes, 0, "magic")?);
    if magic != FLO_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic} (expected {FLO_MAGIC})"),
        });
    }
    let width = i32::from_le_bytes(read_4(bytes, 4, "width")?);
    let height = i32::from_le_bytes(read_4(bytes, 8, "height")?);
    if width <= 0 {
        return Err(Error::Format {
            offset: 4,
            message: format!("invalid width {width}"),
        });
    }
    if height <= 0 {
        return Err(Error::Format {
            offset: 8,
            message: format!("invalid height {height}"),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format {
            offset: 4,
            message: format!("dimensions {w}x{h} overflow"),
        })?;
    if bytes.len() < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("truncated payload: {} of {expected} bytes", bytes.len()),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format {
            offset: expected as u64,
            message: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let a = f32::from_le_bytes(chunk[..4].try_into().expect("4 bytes"));
        let b = f32::from_le_bytes(chunk[4..].try_into().expect("4 bytes"));
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Format {
                offset: (HEADER_LEN + 8 * i) as u64,
                message: "non-finite flow value".into(),
            });
        }
        u.push(a as f64);
        v.push(b as f64);
    }
    FlowField::new(w, h, u, v)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes).map_err(|e| match e {
        Error::Format { offset, message } => Error::Decode {
            path: path.to_path_buf(),
            message: format!("format error at byte {offset}: {message}"),
        },
        other => other,
    })
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &encode_flo(flow))
}
