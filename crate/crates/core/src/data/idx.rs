//! IDX container parsing and writing (big-endian, magic 2051 for images,
//! 2049 for labels).

use super::LabeledImageSet;
use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// Loads an image/label file pair into one labeled set.
pub fn load_image_set(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet> {
    let (pixels, count, rows, cols) = load_images(images_path)?;
    let labels = load_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 4,
            reason: format!("label count {} does not match image count {count}", labels.len()),
        });
    }
    Ok(LabeledImageSet {
        pixels,
        labels,
        rows,
        cols,
    })
}

/// Parses an IDX image file; returns `(pixels, count, rows, cols)`.
pub fn load_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize)> {
    let bytes = read_all(path)?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("image magic {magic}, expected {IMAGE_MAGIC}"),
        });
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let rows = read_u32_be(&bytes, 8, path)? as usize;
    let cols = read_u32_be(&bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len().min(expected) as u64,
            reason: format!(
                "pixel section holds {} bytes, header promises {}",
                bytes.len() - 16,
                count * rows * cols
            ),
        });
    }
    Ok((bytes[16..].to_vec(), count, rows, cols))
}

/// Parses an IDX label file.
pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_all(path)?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("label magic {magic}, expected {LABEL_MAGIC}"),
        });
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len().min(expected) as u64,
            reason: format!("label section holds {} bytes, header promises {count}", bytes.len() - 8),
        });
    }
    Ok(bytes[8..].to_vec())
}

/// Writes a labeled set back into the IDX pair format.
pub fn save_image_set(set: &LabeledImageSet, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut img = Vec::with_capacity(16 + set.pixels.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(set.len() as u32).to_be_bytes());
    img.extend_from_slice(&(set.rows as u32).to_be_bytes());
    img.extend_from_slice(&(set.cols as u32).to_be_bytes());
    img.extend_from_slice(&set.pixels);
    std::fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;

    let mut lab = Vec::with_capacity(8 + set.labels.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(set.len() as u32).to_be_bytes());
    lab.extend_from_slice(&set.labels);
    std::fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            reason: "truncated header".into(),
        })
}
