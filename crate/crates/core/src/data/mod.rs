//! Dataset containers and loaders.

pub mod dvs;
pub mod idx;
pub mod nmnist;
pub mod synthetic;

use crate::encode::EventStream;
use crate::error::{Error, Result};

/// Grayscale images with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    /// `count * rows * cols` bytes, row-major per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let n = self.rows * self.cols;
        if self.pixels.len() != self.labels.len() * n {
            return Err(Error::shape(
                "image set",
                self.labels.len() * n,
                self.pixels.len(),
            ));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(())
    }

    /// Borrowing subset view is not needed; tests and desk-scale runs slice
    /// by copying.
    pub fn take(&self, count: usize) -> LabeledImageSet {
        let count = count.min(self.len());
        let n = self.rows * self.cols;
        LabeledImageSet {
            pixels: self.pixels[..count * n].to_vec(),
            labels: self.labels[..count].to_vec(),
            rows: self.rows,
            cols: self.cols,
        }
    }
}

/// Event-stream recordings with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEventSet {
    pub streams: Vec<EventStream>,
    pub labels: Vec<u8>,
}

impl LabeledEventSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
