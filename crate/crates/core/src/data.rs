//! IDX-format image datasets (the MNIST container format).
//!
//! Pixels are stored as the raw bytes from disk and scaled to `[0, 1]` on
//! access, so a loaded dataset costs one byte per pixel. An optional zero
//! border widens every image at access time; training on padded images lets
//! first-layer filters see digit strokes near the edge.

use crate::determinism::{fisher_yates_shuffle, PortableRng};
use crate::genome::Matrix;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected magic {want}, found {got}")]
    BadMagic { path: PathBuf, want: u32, got: u32 },
    #[error("{path}: header truncated")]
    TruncatedHeader { path: PathBuf },
    #[error("{path}: payload holds {got} bytes, header promises {want}")]
    PayloadSize { path: PathBuf, want: usize, got: usize },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is out of range")]
    LabelRange { index: usize, label: u8 },
    #[error("dataset is empty")]
    Empty,
}

/// A labeled image set with fixed dimensions and lazy pixel scaling.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<u8>,
    labels: Vec<u8>,
    rows: usize,
    cols: usize,
    pad: usize,
    classes: usize,
}

impl Dataset {
    /// Loads an IDX image file and its companion label file.
    pub fn load(
        images_path: &Path,
        labels_path: &Path,
        pad: usize,
    ) -> Result<Dataset, DataError> {
        let (images, rows, cols) = read_idx_images(images_path)?;
        let labels = read_idx_labels(labels_path)?;
        let image_count = images.len() / (rows * cols);
        if image_count != labels.len() {
            return Err(DataError::CountMismatch { images: image_count, labels: labels.len() });
        }
        Dataset::from_parts(images, labels, rows, cols, pad)
    }

    /// Builds a dataset from in-memory pixels and labels. The class count is
    /// the highest label plus one.
    pub fn from_parts(
        images: Vec<u8>,
        labels: Vec<u8>,
        rows: usize,
        cols: usize,
        pad: usize,
    ) -> Result<Dataset, DataError> {
        if labels.is_empty() || rows == 0 || cols == 0 {
            return Err(DataError::Empty);
        }
        assert_eq!(images.len(), labels.len() * rows * cols, "pixel buffer size");
        let classes = usize::from(*labels.iter().max().unwrap()) + 1;
        Ok(Dataset { images, labels, rows, cols, pad, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Image width after padding.
    pub fn width(&self) -> usize {
        self.cols + 2 * self.pad
    }

    /// Image height after padding.
    pub fn height(&self) -> usize {
        self.rows + 2 * self.pad
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    /// Writes image `index` into `out`, which must already have the padded
    /// dimensions. Pixels scale to `[0, 1]`; the border stays zero.
    pub fn image_into(&self, index: usize, out: &mut Matrix) {
        assert_eq!(out.width(), self.width(), "image width");
        assert_eq!(out.height(), self.height(), "image height");
        out.fill(0.0);
        let base = index * self.rows * self.cols;
        for y in 0..self.rows {
            let row = &self.images[base + y * self.cols..base + (y + 1) * self.cols];
            for (x, &byte) in row.iter().enumerate() {
                out.set(x + self.pad, y + self.pad, f64::from(byte) / 255.0);
            }
        }
    }

    pub fn image(&self, index: usize) -> Matrix {
        let mut out = Matrix::zeros(self.width(), self.height());
        self.image_into(index, &mut out);
        out
    }

    /// A deterministic sample of `count` items: the whole index range is
    /// shuffled with `seed` and the prefix is kept, so any two subsets drawn
    /// with the same seed nest inside each other.
    pub fn subset(&self, count: usize, seed: u64) -> Dataset {
        let count = count.min(self.len());
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = PortableRng::new(seed);
        fisher_yates_shuffle(&mut order, &mut rng);
        let frame = self.rows * self.cols;
        let mut images = Vec::with_capacity(count * frame);
        let mut labels = Vec::with_capacity(count);
        for &i in &order[..count] {
            images.extend_from_slice(&self.images[i * frame..(i + 1) * frame]);
            labels.push(self.labels[i]);
        }
        Dataset {
            images,
            labels,
            rows: self.rows,
            cols: self.cols,
            pad: self.pad,
            classes: self.classes,
        }
    }

    /// Re-borders the dataset without touching pixel data.
    pub fn with_pad(&self, pad: usize) -> Dataset {
        let mut out = self.clone();
        out.pad = pad;
        out
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

fn read_u32s(bytes: &[u8], n: usize, path: &Path) -> Result<Vec<u32>, DataError> {
    if bytes.len() < 4 * n {
        return Err(DataError::TruncatedHeader { path: path.to_path_buf() });
    }
    Ok((0..n)
        .map(|i| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()))
        .collect())
}

fn read_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize), DataError> {
    let bytes = read_file(path)?;
    let header = read_u32s(&bytes, 4, path)?;
    if header[0] != IMAGE_MAGIC {
        return Err(DataError::BadMagic { path: path.to_path_buf(), want: IMAGE_MAGIC, got: header[0] });
    }
    let count = header[1] as usize;
    let rows = header[2] as usize;
    let cols = header[3] as usize;
    let want = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != want {
        return Err(DataError::PayloadSize { path: path.to_path_buf(), want, got: payload.len() });
    }
    Ok((payload.to_vec(), rows, cols))
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = read_file(path)?;
    let header = read_u32s(&bytes, 2, path)?;
    if header[0] != LABEL_MAGIC {
        return Err(DataError::BadMagic { path: path.to_path_buf(), want: LABEL_MAGIC, got: header[0] });
    }
    let want = header[1] as usize;
    let payload = &bytes[8..];
    if payload.len() != want {
        return Err(DataError::PayloadSize { path: path.to_path_buf(), want, got: payload.len() });
    }
    Ok(payload.to_vec())
}

/// Serializes images back to IDX bytes; the complement of `read_idx_images`,
/// used by tests and fixture tooling.
pub fn write_idx_images(images: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(images.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(images);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
