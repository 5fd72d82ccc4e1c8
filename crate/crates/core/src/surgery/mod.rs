//! Structural operators on conv layers: split kernels into transformed copies,
//! merge them by k-means clustering, and rewire the consuming layer so the
//! network stays well-formed.
//!
//! Every operator works on a copy of the network and only commits once the
//! result passes [`validate_model`].

mod merge;
mod rotate;
mod split;

pub use merge::{merge_layer, BiasVariant, MergeConfig, WeightVariant};
pub use rotate::rotate_kernel;
pub use split::{split_layer, SplitConfig, SplitMode};

use serde::Serialize;

use crate::error::{Error, Result, ValidationReport};
use crate::layers::{ConvLayerParams, FcLayerParams, Layer, Network};
use crate::tensor::Tensor;

/// Checks every shape constraint of a network.
pub fn validate_model(model: &Network) -> std::result::Result<(), ValidationReport> {
    model.check().map(|_| ())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurgeryKind {
    Split,
    Merge,
}

/// What a structural operation changed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurgeryReport {
    pub kind: SurgeryKind,
    pub layer: usize,
    pub consumer: usize,
    pub kernels_before: usize,
    pub kernels_after: usize,
    pub params_before: usize,
    pub params_after: usize,
    /// k-means distortion, merges only.
    pub distortion: Option<f64>,
}

/// The next parameterized layer reading a conv layer's output channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Consumer {
    pub index: usize,
    /// Consecutive input weights owned by one producer channel: `k*k` for a
    /// conv consumer, the flattened spatial size for an fc consumer.
    pub block: usize,
    pub is_fc: bool,
}

pub(crate) fn find_consumer(model: &Network, layer: usize) -> Result<Consumer> {
    let fail = |message: String| Err(Error::Surgery { layer, message });
    let layers = model.layers();
    match layers.get(layer) {
        Some(Layer::Conv(_)) => {}
        Some(other) => return fail(format!("layer is {}, not conv", other.kind())),
        None => return fail(format!("no such layer (network has {})", layers.len())),
    }
    let shapes = model.check().map_err(Error::InvalidModel)?;
    let mut flattened_from: Option<&[usize]> = None;
    for idx in layer + 1..layers.len() {
        match &layers[idx] {
            Layer::Relu | Layer::MaxPool(_) => {}
            Layer::Flatten => flattened_from = Some(&shapes[idx - 1]),
            Layer::Conv(p) => {
                return Ok(Consumer { index: idx, block: p.kernel_size() * p.kernel_size(), is_fc: false })
            }
            Layer::Fc(_) => {
                let Some(shape) = flattened_from else {
                    return fail(format!("fc layer {idx} is not preceded by a flatten"));
                };
                return Ok(Consumer { index: idx, block: shape[1] * shape[2], is_fc: true });
            }
            Layer::SoftmaxXent => break,
        }
    }
    fail("no consumer layer before the loss".into())
}

/// Rebuilds a consumer's input weights. New input channel `j` receives
/// `sum(coeff * old channel i)` over `mixes[j]`; an empty mix gives zeros.
pub(crate) fn remix_inputs(layer: &Layer, consumer: Consumer, mixes: &[Vec<(usize, f32)>]) -> Result<Layer> {
    let (weights, biases) = match layer {
        Layer::Conv(p) => (p.weights(), p.biases()),
        Layer::Fc(p) => (p.weights(), p.biases()),
        _ => unreachable!("consumer is conv or fc"),
    };
    let rows = weights.shape()[0];
    let block = consumer.block;
    let old_channels = weights.len() / rows / block;
    let src = weights.data();
    let mut out = Vec::with_capacity(rows * mixes.len() * block);
    for r in 0..rows {
        let row = &src[r * old_channels * block..(r + 1) * old_channels * block];
        for mix in mixes {
            let start = out.len();
            match mix.split_first() {
                None => out.resize(start + block, 0.0),
                Some((&(first, coeff), rest)) => {
                    out.extend(row[first * block..(first + 1) * block].iter().map(|&w| coeff * w));
                    for &(ch, coeff) in rest {
                        for (dst, &w) in out[start..].iter_mut().zip(&row[ch * block..(ch + 1) * block]) {
                            *dst += coeff * w;
                        }
                    }
                }
            }
        }
    }
    Ok(match layer {
        Layer::Conv(p) => {
            let k = p.kernel_size();
            Layer::Conv(ConvLayerParams::new(Tensor::new(&[rows, mixes.len(), k, k], out)?, biases.clone())?)
        }
        _ => Layer::Fc(FcLayerParams::new(Tensor::new(&[rows, mixes.len() * block], out)?, biases.clone())?),
    })
}

/// Swaps in the rebuilt producer and consumer if the result validates.
pub(crate) fn commit(
    model: &mut Network,
    layer: usize,
    producer: Layer,
    consumer_index: usize,
    consumer: Layer,
) -> Result<()> {
    let mut candidate = model.clone();
    candidate.layers_mut()[layer] = producer;
    candidate.layers_mut()[consumer_index] = consumer;
    validate_model(&candidate).map_err(Error::InvalidModel)?;
    *model = candidate;
    Ok(())
}
