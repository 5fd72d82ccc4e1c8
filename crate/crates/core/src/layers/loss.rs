use crate::error::{arg_err, dim_err, Result};
use crate::tensor::Tensor;

fn check(logits: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return dim_err(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        ));
    }
    let classes = logits.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return arg_err(format!("label {bad} out of range for {classes} classes"));
    }
    Ok((labels.len(), classes))
}

/// Mean cross-entropy of a softmax over each row, plus the row probabilities.
pub fn softmax_xent_forward(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (batch, classes) = check(logits, labels)?;
    let mut probs = Vec::with_capacity(batch * classes);
    let mut total = 0.0f64;
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let log_sum = sum.ln() + max;
        total += log_sum - row[label] as f64;
        probs.extend(row.iter().map(|&v| (v as f64 - log_sum).exp() as f32));
    }
    Ok((total / batch as f64, Tensor::new(&[batch, classes], probs)?))
}

/// `(probs - onehot(labels)) / batch`.
pub fn softmax_xent_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (batch, classes) = check(probs, labels)?;
    let scale = 1.0 / batch as f32;
    let mut grad = probs.scale(scale);
    for (row, &label) in grad.data_mut().chunks_exact_mut(classes).zip(labels) {
        row[label] -= scale;
    }
    Ok(grad)
}
