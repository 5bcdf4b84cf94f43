//! Binary model checkpoints: a 16-byte header (8-byte magic, `C` and `f` as
//! little-endian `u32`) followed by the flat parameter vector as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use fedfair_core::model::ModelParams;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"FFAIRCK1";
const HEADER_LEN: usize = 16;

pub fn encode(w: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * w.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(w.classes() as u32).to_le_bytes());
    out.extend_from_slice(&(w.features() as u32).to_le_bytes());
    for v in w.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<ModelParams> {
    let bad = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(bytes.len(), format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len())));
    }
    if bytes[..8] != MAGIC {
        return Err(bad(0, "bad checkpoint magic".into()));
    }
    let classes = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let features = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expected = classes * (features + 1);
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * expected {
        return Err(bad(
            HEADER_LEN + body.len().min(8 * expected),
            format!("expected {expected} parameters, found {} bytes of data", body.len()),
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(ModelParams::from_values(classes, features, values)?)
}

pub fn save(path: &Path, w: &ModelParams) -> Result<()> {
    fs::write(path, encode(w)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(path, &bytes)
}
