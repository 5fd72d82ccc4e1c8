use std::time::Instant;

use crate::data::LabeledDataset;
use crate::error::{arg_err, Result};
use crate::layers::{softmax_xent_forward, Network};
use crate::tensor::Tensor;

const EVAL_BATCH: usize = 250;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

impl EvalResult {
    /// Error rate in percent.
    pub fn error_percent(&self) -> f64 {
        100.0 * (1.0 - self.accuracy)
    }
}

/// Index of the largest logit in each row, ties to the lowest index.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    let classes = logits.shape()[1];
    logits
        .data()
        .chunks_exact(classes)
        .map(|row| {
            row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
        })
        .collect()
}

/// Accuracy and mean loss over a whole dataset.
pub fn evaluate(model: &Network, dataset: &LabeledDataset) -> Result<EvalResult> {
    if dataset.is_empty() {
        return arg_err("cannot evaluate on an empty dataset");
    }
    let mut correct = 0;
    let mut loss_sum = 0.0;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, labels) = dataset.batch(chunk)?;
        let logits = model.forward(&x)?;
        let (loss, _) = softmax_xent_forward(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        correct += predictions(&logits).iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    let total = dataset.len();
    Ok(EvalResult { accuracy: correct as f64 / total as f64, mean_loss: loss_sum / total as f64, correct, total })
}

/// Wall-clock milliseconds of `reps` forward passes over consecutive batches
/// of `batch_size` samples (wrapping around the dataset).
pub fn forward_timings(model: &Network, dataset: &LabeledDataset, batch_size: usize, reps: usize) -> Result<Vec<f64>> {
    if dataset.is_empty() || batch_size == 0 {
        return arg_err("timing needs a non-empty dataset and batch size");
    }
    let mut times = Vec::with_capacity(reps);
    for r in 0..reps {
        let indices: Vec<usize> = (0..batch_size).map(|i| (r * batch_size + i) % dataset.len()).collect();
        let (x, _) = dataset.batch(&indices)?;
        let start = Instant::now();
        let logits = model.forward(&x)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(logits);
    }
    Ok(times)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}
