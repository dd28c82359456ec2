//! MNIST ingestion and IID partitioning.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Real, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
/// Pixels per image, `28 × 28`.
pub const FEATURES: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CLASSES: usize = 10;

/// Images as a row-major `samples × 784` matrix with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    pub features: Vec<T>,
    pub labels: Vec<u8>,
}

impl<T: Real> Dataset<T> {
    pub fn new(features: Vec<T>, labels: Vec<u8>) -> Result<Self> {
        if features.len() != labels.len() * FEATURES {
            return Err(Error::invalid(format!(
                "{} feature values for {} labels",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite feature"));
        }
        if let Some(l) = labels.iter().find(|&&l| usize::from(l) >= CLASSES) {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * FEATURES..(i + 1) * FEATURES]
    }

    /// Copies the given rows into a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * FEATURES);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Splits off the trailing `count` samples.
    pub fn split_tail(&self, count: usize) -> Result<(Self, Self)> {
        if count > self.len() {
            return Err(Error::config(format!(
                "cannot hold out {count} of {} samples",
                self.len()
            )));
        }
        let head: Vec<usize> = (0..self.len() - count).collect();
        let tail: Vec<usize> = (self.len() - count..self.len()).collect();
        Ok((self.subset(&head), self.subset(&tail)))
    }
}

/// Reads a file, transparently inflating gzip content.
fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn format_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_error(bytes.len(), "truncated header"))
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(format_error(0, format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    bytes.get(start..start + len).ok_or_else(|| {
        format_error(
            bytes.len(),
            format!("truncated payload, expected {len} bytes from offset {start}"),
        )
    })
}

/// Parses an IDX image file (`0x00000803`, count × 28 × 28 unsigned bytes).
/// Returns the raw pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, Vec<u8>)> {
    expect_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(format_error(8, format!("images are {rows}x{cols}, expected 28x28")));
    }
    let pixels = payload(bytes, 16, count * FEATURES)?;
    Ok((count, pixels.to_vec()))
}

/// Parses an IDX label file (`0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let labels = payload(bytes, 8, count)?;
    if let Some(i) = labels.iter().position(|&l| usize::from(l) >= CLASSES) {
        return Err(format_error(8 + i, format!("label {} out of range", labels[i])));
    }
    Ok(labels.to_vec())
}

/// Builds a dataset from raw IDX contents.
pub fn dataset_from_idx<T: Real>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let (count, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(format_error(4, format!("{} labels for {count} images", labels.len())));
    }
    let scale = T::lit(255.0);
    let features = pixels.iter().map(|&p| T::from_count(usize::from(p)) / scale).collect();
    Ok(Dataset { features, labels })
}

/// Loads an MNIST image/label file pair, gzip-compressed or not.
pub fn load_mnist_idx<T: Real>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let images = read_maybe_gzip(images_path.as_ref())?;
    let labels = read_maybe_gzip(labels_path.as_ref())?;
    dataset_from_idx(&images, &labels)
}

/// Disjoint uniformly random shards of `per_user` sample indices each.
pub fn partition_iid<T: Real, R: Rng + ?Sized>(
    ds: &Dataset<T>,
    users: usize,
    per_user: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if per_user == 0 {
        return Err(Error::config("shards need at least one sample"));
    }
    let needed = users
        .checked_mul(per_user)
        .ok_or_else(|| Error::config("shard sizes overflow"))?;
    if needed > ds.len() {
        return Err(Error::config(format!(
            "{users} shards of {per_user} need {needed} samples, only {} available",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(rng);
    Ok(order[..needed].chunks(per_user).map(<[usize]>::to_vec).collect())
}
