//! Datasets: MNIST IDX files, a synthetic glyph set for quick runs,
//! seeded train/validation splits and epoch batching.

mod batch;
mod idx;
mod synth;

pub use batch::BatchIterator;
pub use idx::{
    load_mnist_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, MnistFiles,
    SUBSET_IMAGES, SUBSET_LABELS,
};
pub use synth::{synth_digits, SYNTH_CLASSES, SYNTH_SIZE};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, dim_err, Result};
use crate::tensor::Tensor;

/// Environment variable naming the directory that holds dataset files.
pub const DATA_DIR_ENV: &str = "DCCK_DATA_DIR";

/// Images `[n x c x h x w]` with pixels in `[0, 1]` and one label per image.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.rank() != 4 || images.shape()[0] != labels.len() {
            return dim_err(format!(
                "images {:?} do not match {} labels",
                images.shape(),
                labels.len()
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return arg_err(format!("label {bad} outside 0..{class_count}"));
        }
        Ok(Self { images, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// `[c, h, w]` of one sample.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Gathers the given samples into a batch tensor and label list.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return arg_err(format!("sample {i} out of range for {} samples", self.len()));
            }
            data.extend_from_slice(&self.images.data()[i * len..(i + 1) * len]);
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.sample_shape();
        Ok((Tensor::new(&[indices.len(), c, h, w], data)?, labels))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (images, labels) = self.batch(indices)?;
        Self::new(images, labels, self.class_count)
    }

    /// Concatenates two datasets with the same sample shape.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let images = Tensor::concat(&[&self.images, &other.images], 0)?;
        let labels = self.labels.iter().chain(&other.labels).copied().collect();
        Self::new(images, labels, self.class_count.max(other.class_count))
    }
}

/// Seeded permutation of `0..n`.
pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    indices
}

/// Holds out `round(fraction * n)` samples (at least one, at most `n - 1`)
/// chosen by a seeded shuffle. Both parts keep the original sample order.
pub fn split_train_validation(
    dataset: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return arg_err(format!("validation fraction {fraction} must lie strictly between 0 and 1"));
    }
    let n = dataset.len();
    if n < 2 {
        return arg_err(format!("cannot split a dataset of {n} samples"));
    }
    let held = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let order = shuffled_indices(n, seed);
    let mut validation = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok((dataset.subset(&train)?, dataset.subset(&validation)?))
}

/// Holds out exactly `count` samples chosen by a seeded shuffle and returns
/// `(rest, held)`, both in original order.
pub fn holdout(dataset: &LabeledDataset, count: usize, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let n = dataset.len();
    if count == 0 || count >= n {
        return arg_err(format!("cannot hold out {count} of {n} samples"));
    }
    let order = shuffled_indices(n, seed);
    let mut held = order[..count].to_vec();
    let mut rest = order[count..].to_vec();
    held.sort_unstable();
    rest.sort_unstable();
    Ok((dataset.subset(&rest)?, dataset.subset(&held)?))
}
