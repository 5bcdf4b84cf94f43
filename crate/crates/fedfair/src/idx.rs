//! IDX image/label files (the MNIST distribution format).

use std::fs;
use std::path::{Path, PathBuf};

use fedfair_core::data::LabeledDataset;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| self.truncated(field, end))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4-byte slice")))
    }

    fn take(&mut self, len: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos + len;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| self.truncated(field, end))?;
        self.pos = end;
        Ok(chunk)
    }

    fn truncated(&self, field: &str, needed: usize) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: self.bytes.len() as u64,
            reason: format!("truncated while reading {field}: need {needed} bytes, file has {}", self.bytes.len()),
        }
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32("magic number")?;
        if found != expected {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                offset: 0,
                reason: format!("bad magic number {found:#010x}, expected {expected:#010x}"),
            });
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses raw image bytes: `(count, rows * cols, pixels)`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(IMAGES_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let pixels = r.take(count * rows * cols, "pixel data")?;
    Ok((count, rows * cols, pixels.to_vec()))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.magic(LABELS_MAGIC)?;
    let count = r.u32("label count")? as usize;
    Ok(r.take(count, "label data")?.to_vec())
}

/// Loads an image/label pair, scaling pixel bytes to `[0, 1]`. The class
/// count is one more than the largest label. `limit` keeps only the first
/// samples.
pub fn load_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<LabeledDataset> {
    let (count, features, pixels) = parse_images(images, &read(images)?)?;
    let label_bytes = parse_labels(labels, &read(labels)?)?;
    if label_bytes.len() != count {
        return Err(Error::Format {
            path: labels.to_path_buf(),
            offset: 4,
            reason: format!("label count {} does not match image count {count}", label_bytes.len()),
        });
    }
    let n = limit.map_or(count, |l| l.min(count));
    let x: Vec<f64> = pixels[..n * features].iter().map(|&b| f64::from(b) / 255.0).collect();
    let y: Vec<u32> = label_bytes[..n].iter().map(|&b| u32::from(b)).collect();
    let classes = y.iter().max().map_or(0, |&m| m as usize + 1).max(2);
    Ok(LabeledDataset::new(x, y, features, classes)?)
}

/// Encodes `rows x cols` images in IDX form.
pub fn encode_images(rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols) as usize;
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Conventional file names inside a dataset directory.
pub fn default_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"))
}
