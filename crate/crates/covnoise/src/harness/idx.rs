//! IDX file parsing (the MNIST/Fashion-MNIST container format).
//!
//! Big-endian headers: magic 0x00000803 for images (count x rows x cols of
//! unsigned bytes, scaled here to [0, 1]) and 0x00000801 for labels.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::Batch;

use super::data::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::TruncatedFile(format!("missing {what}")));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn read_bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedFile(format!(
                "expected {n} bytes of {what}, found {}",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// Parse an images file: returns (count x (rows*cols)) pixels in [0, 1].
pub fn parse_idx_images(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let count = r.read_u32("image count")? as usize;
    let rows = r.read_u32("row count")? as usize;
    let cols = r.read_u32("column count")? as usize;
    let pixels = r.read_bytes(count * rows * cols, "pixels")?;
    let dim = rows * cols;
    let mut out = DMatrix::zeros(count, dim);
    for i in 0..count {
        for j in 0..dim {
            out[(i, j)] = pixels[i * dim + j] as f64 / 255.0;
        }
    }
    Ok(out)
}

/// Parse a labels file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader::new(bytes);
    let magic = r.read_u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let count = r.read_u32("label count")? as usize;
    let labels = r.read_bytes(count, "labels")?;
    Ok(labels.iter().map(|&b| b as usize).collect())
}

/// Serialize labels back to IDX bytes (lossless round trip).
pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > u8::MAX as usize {
            return Err(Error::BadLabel {
                label: l,
                classes: 256,
            });
        }
        out.push(l as u8);
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .read_to_end(&mut bytes)?;
    Ok(bytes)
}

/// Load an images/labels pair into a dataset; the digest covers both files.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;
    let inputs = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if inputs.nrows() != labels.len() {
        return Err(Error::CountMismatch {
            images: inputs.nrows(),
            labels: labels.len(),
        });
    }
    let mut hasher = Sha256::new();
    hasher.update(&image_bytes);
    hasher.update(&label_bytes);
    let digest: String = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Ok(Dataset::new(Batch::new(inputs, labels)?, name, Some(digest)))
}
