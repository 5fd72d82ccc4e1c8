use std::fs;
use std::path::{Path, PathBuf};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err<T>(path: &Path, msg: impl std::fmt::Display) -> Result<T> {
    Err(Error::Format(format!("{}: {msg}", path.display())))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::at(path))
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (dims + 1);
    if bytes.len() < need {
        return format_err(path, format!("truncated header ({} bytes)", bytes.len()));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(0) != magic {
        return format_err(path, format!("bad magic {:#010x}, expected {magic:#010x}", word(0)));
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

/// Reads an IDX3 image file, scaling bytes to `[0, 1]`. Returns `[n x 1 x rows x cols]`.
pub fn read_idx_images(path: &Path) -> Result<Tensor> {
    let bytes = read(path)?;
    let dims = header(&bytes, path, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let payload = &bytes[16..];
    if payload.len() != n * rows * cols {
        return format_err(path, format!("expected {} pixel bytes, found {}", n * rows * cols, payload.len()));
    }
    Tensor::new(&[n, 1, rows, cols], payload.iter().map(|&b| b as f32 / 255.0).collect())
}

/// Reads an IDX1 label file.
pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read(path)?;
    let n = header(&bytes, path, LABELS_MAGIC, 1)?[0];
    let payload = &bytes[8..];
    if payload.len() != n {
        return format_err(path, format!("expected {n} label bytes, found {}", payload.len()));
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Loads an MNIST image/label pair.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.shape()[0] != labels.len() {
        return format_err(
            labels_path,
            format!("{} labels for {} images in {}", labels.len(), images.shape()[0], images_path.display()),
        );
    }
    LabeledDataset::new(images, labels, 10)
}

/// Writes single-channel images as IDX3, quantizing pixels to `round(255 * v)`.
pub fn write_idx_images(path: &Path, images: &Tensor) -> Result<()> {
    let s = images.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(Error::Dimension(format!("IDX images must be [n x 1 x h x w], got {s:?}")));
    }
    let mut bytes = Vec::with_capacity(16 + images.len());
    for word in [IMAGES_MAGIC, s[0] as u32, s[2] as u32, s[3] as u32] {
        bytes.extend_from_slice(&word.to_be_bytes());
    }
    bytes.extend(images.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(Error::at(path))?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let byte = u8::try_from(l).map_err(|_| Error::InvalidArgument(format!("label {l} does not fit a byte")))?;
        bytes.push(byte);
    }
    fs::write(path, bytes).map_err(Error::at(path))?;
    Ok(())
}

/// File names of the 10,000-digit subset written by `scripts/fetch_mnist_subset.py`.
pub const SUBSET_IMAGES: &str = "mnist10k-images-idx3-ubyte";
pub const SUBSET_LABELS: &str = "mnist10k-labels-idx1-ubyte";

/// Standard file names inside a dataset directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    /// The official 60k/10k file pair names.
    pub fn official(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn exist(&self) -> bool {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels].iter().all(|p| p.is_file())
    }
}
