//! `FEA1` binary container: little-endian header, optional frame times,
//! then row-major `f32` values.

use std::path::Path;

use ndarray::Array2;

use super::{FeatureAxis, FeatureMatrix};
use crate::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 4] = b"FEA1";
const HEADER_LEN: usize = 4 + 4 + 4 + 1;

pub fn encode_container(m: &FeatureMatrix) -> Vec<u8> {
    let (rows, cols) = m.values().dim();
    let times_len = m.frame_times().map_or(0, |t| t.len() * 8);
    let mut out = Vec::with_capacity(HEADER_LEN + times_len + rows * cols * 4);
    out.extend_from_slice(CONTAINER_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.push(match m.axis() {
        FeatureAxis::Frames => 0,
        FeatureAxis::Beats => 1,
    });
    if let Some(times) = m.frame_times() {
        for t in times {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    for v in m.values().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a container. `origin` only labels diagnostics.
pub fn decode_container(bytes: &[u8], name: &str, origin: &Path) -> Result<FeatureMatrix> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: origin.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != CONTAINER_MAGIC {
        return Err(malformed(format!("bad magic {:?}", &bytes[..4])));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let axis = match bytes[12] {
        0 => FeatureAxis::Frames,
        1 => FeatureAxis::Beats,
        flag => return Err(malformed(format!("unknown axis flag {flag}"))),
    };
    if rows == 0 || cols == 0 {
        return Err(malformed(format!("empty shape {rows}x{cols}")));
    }
    let times_len = if axis == FeatureAxis::Frames {
        rows * 8
    } else {
        0
    };
    let expected = HEADER_LEN + times_len + rows * cols * 4;
    if bytes.len() != expected {
        return Err(malformed(format!(
            "payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let mut cursor = HEADER_LEN;
    let frame_times = (axis == FeatureAxis::Frames).then(|| {
        let times = bytes[cursor..cursor + times_len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<_>>();
        cursor += times_len;
        times
    });
    let values: Vec<f32> = bytes[cursor..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((rows, cols), values).expect("length checked above");
    FeatureMatrix::new(name.to_string(), axis, values, frame_times)
}

pub fn read_container(path: &Path, name: &str) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes, name, path)
}

pub fn write_container(path: &Path, m: &FeatureMatrix) -> Result<()> {
    std::fs::write(path, encode_container(m)).map_err(|e| Error::io(path, e))
}
