//! Ordered layer stacks: shape inference, initialization, and the
//! forward/backward drivers used by training and surgery.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::{conv_backward_impl, conv_forward, ConvLayerParams};
use super::fc::{fc_backward, fc_forward, FcLayerParams};
use super::loss::{softmax_xent_backward, softmax_xent_forward};
use super::pool::{maxpool_backward, maxpool_forward, MaxPool};
use super::relu::{relu_backward, relu_forward};
use crate::error::{dim_err, Error, Result, ValidationReport};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayerParams),
    Relu,
    MaxPool(MaxPool),
    Flatten,
    Fc(FcLayerParams),
    SoftmaxXent,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Fc(_) => "fc",
            Layer::SoftmaxXent => "softmax_xent",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(p) => p.param_count(),
            Layer::Fc(p) => p.param_count(),
            _ => 0,
        }
    }

    pub fn as_conv(&self) -> Option<&ConvLayerParams> {
        match self {
            Layer::Conv(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_fc(&self) -> Option<&FcLayerParams> {
        match self {
            Layer::Fc(p) => Some(p),
            _ => None,
        }
    }
}

/// Architecture descriptor; input channels and fc fan-in are inferred.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { kernels: usize, size: usize },
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
    Fc { outputs: usize },
    SoftmaxXent,
}

impl LayerSpec {
    /// Two conv+relu+pool stages and two fully connected layers, the MNIST
    /// baseline with `conv1` kernels in the first layer (100 for the reference model).
    pub fn mnist_baseline(conv1: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv { kernels: conv1, size: 5 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Conv { kernels: 50, size: 5 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Fc { outputs: 100 },
            LayerSpec::Relu,
            LayerSpec::Fc { outputs: 10 },
            LayerSpec::SoftmaxXent,
        ]
    }
}

/// Gaussian initialization scales. Biases always start at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitConfig {
    /// Standard deviation of conv weights.
    pub conv_std: f32,
    /// Fc weights use standard deviation `fc_gain / sqrt(fan_in)`.
    pub fc_gain: f32,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { conv_std: 0.01, fc_gain: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub weights: Tensor,
    pub biases: Tensor,
}

/// Per-layer parameter gradients, `None` for parameter-free layers.
pub type Gradients = Vec<Option<ParamGrads>>;

/// A feed-forward network over `[C x H x W]` samples ending in a softmax loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
}

fn report(producer: Option<usize>, consumer: usize, message: String) -> ValidationReport {
    ValidationReport { producer, consumer, message }
}

impl Network {
    /// Builds a network and checks every shape constraint.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        let net = Self { input_shape, layers };
        net.check().map_err(Error::InvalidModel)?;
        Ok(net)
    }

    /// Builds a network without validation (used when loading or inspecting broken models).
    pub fn new_unchecked(input_shape: [usize; 3], layers: Vec<Layer>) -> Self {
        Self { input_shape, layers }
    }

    pub fn from_spec(input_shape: [usize; 3], spec: &[LayerSpec], init: InitConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(spec.len());
        let gaussian = |std: f32, n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<f32>> {
            let dist = Normal::new(0.0f32, std)
                .map_err(|e| Error::InvalidArgument(format!("init std {std}: {e}")))?;
            Ok((0..n).map(|_| dist.sample(rng)).collect())
        };
        for (idx, s) in spec.iter().enumerate() {
            let layer = match *s {
                LayerSpec::Conv { kernels, size } => {
                    if shape.len() != 3 {
                        return dim_err(format!("layer {idx}: conv needs a [C x H x W] input, got {shape:?}"));
                    }
                    let w = gaussian(init.conv_std, kernels * shape[0] * size * size, &mut rng)?;
                    Layer::Conv(ConvLayerParams::new(
                        Tensor::new(&[kernels, shape[0], size, size], w)?,
                        Tensor::zeros(&[kernels])?,
                    )?)
                }
                LayerSpec::Fc { outputs } => {
                    let fan_in: usize = shape.iter().product();
                    let std = init.fc_gain / (fan_in as f32).sqrt();
                    let w = gaussian(std, outputs * fan_in, &mut rng)?;
                    Layer::Fc(FcLayerParams::new(Tensor::new(&[outputs, fan_in], w)?, Tensor::zeros(&[outputs])?)?)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { window, stride } => Layer::MaxPool(MaxPool::new(window, stride)?),
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::SoftmaxXent => Layer::SoftmaxXent,
            };
            shape = layer_output_shape(&layer, &shape)
                .map_err(|message| Error::InvalidModel(report(None, idx, message)))?;
            layers.push(layer);
        }
        Self::new(input_shape, layers)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut Vec<Layer> {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn class_count(&self) -> usize {
        self.layers.iter().rev().find_map(Layer::as_fc).map_or(0, FcLayerParams::out_features)
    }

    /// Indices of conv layers in order.
    pub fn conv_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, Layer::Conv(_)).then_some(i))
            .collect()
    }

    /// Per-sample output shape of every layer, or the first violated constraint.
    pub fn check(&self) -> std::result::Result<Vec<Vec<usize>>, ValidationReport> {
        let mut shape = self.input_shape.to_vec();
        if shape.contains(&0) {
            return Err(report(None, 0, format!("input shape {shape:?} has a zero extent")));
        }
        let mut producer: Option<usize> = None;
        let mut shapes = Vec::with_capacity(self.layers.len());
        let loss_count = self.layers.iter().filter(|l| matches!(l, Layer::SoftmaxXent)).count();
        if loss_count != 1 || !matches!(self.layers.last(), Some(Layer::SoftmaxXent)) {
            let at = self.layers.len().saturating_sub(1);
            return Err(report(None, at, format!("expected exactly one loss layer, last; found {loss_count}")));
        }
        for (idx, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(layer, &shape).map_err(|m| report(producer, idx, m))?;
            if matches!(layer, Layer::Conv(_) | Layer::Fc(_)) {
                producer = Some(idx);
            }
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    /// Logits `[B x classes]` for a batch `[B x C x H x W]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_batch(x)?;
        let mut act = x.clone();
        for layer in &self.layers {
            act = match layer {
                Layer::Conv(p) => conv_forward(&act, p)?,
                Layer::Relu => relu_forward(&act),
                Layer::MaxPool(pool) => maxpool_forward(&act, *pool)?.0,
                Layer::Flatten => flatten(act)?,
                Layer::Fc(p) => fc_forward(&act, p)?,
                Layer::SoftmaxXent => break,
            };
        }
        Ok(act)
    }

    /// Mean loss over the batch and gradients for every parameter layer.
    pub fn loss_and_grads(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.check_batch(x)?;
        let mut inputs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        let mut argmaxes: Vec<Option<Vec<u32>>> = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        let mut loss_state = None;
        for layer in &self.layers {
            let (next, argmax) = match layer {
                Layer::Conv(p) => (conv_forward(&act, p)?, None),
                Layer::Relu => (relu_forward(&act), None),
                Layer::MaxPool(pool) => {
                    let (y, arg) = maxpool_forward(&act, *pool)?;
                    (y, Some(arg))
                }
                Layer::Flatten => (flatten(act.clone())?, None),
                Layer::Fc(p) => (fc_forward(&act, p)?, None),
                Layer::SoftmaxXent => {
                    loss_state = Some(softmax_xent_forward(&act, labels)?);
                    (act.clone(), None)
                }
            };
            inputs.push(std::mem::replace(&mut act, next));
            argmaxes.push(argmax);
        }
        let (loss, probs) = loss_state.expect("validated network ends in a loss layer");

        let first_param = self.layers.iter().position(|l| l.param_count() > 0).unwrap_or(0);
        let mut grads: Gradients = vec![None; self.layers.len()];
        let mut grad = softmax_xent_backward(&probs, labels)?;
        for idx in (0..self.layers.len() - 1).rev() {
            let input = &inputs[idx];
            grad = match &self.layers[idx] {
                Layer::Conv(p) => {
                    let (gx, gw, gb) = conv_backward_impl(input, p, &grad, idx > first_param)?;
                    grads[idx] = Some(ParamGrads { weights: gw, biases: gb });
                    match gx {
                        Some(gx) => gx,
                        None => break,
                    }
                }
                Layer::Relu => relu_backward(input, &grad)?,
                Layer::MaxPool(_) => {
                    maxpool_backward(input.shape(), argmaxes[idx].as_ref().expect("pool argmax"), &grad)?
                }
                Layer::Flatten => grad.into_reshape(input.shape())?,
                Layer::Fc(p) => {
                    let g = fc_backward(input, p, &grad)?;
                    grads[idx] = Some(ParamGrads { weights: g.grad_w, biases: g.grad_b });
                    g.grad_x
                }
                Layer::SoftmaxXent => unreachable!("loss layer is last"),
            };
            if idx <= first_param && grads[idx].is_some() {
                break;
            }
        }
        Ok((loss, grads))
    }

    fn check_batch(&self, x: &Tensor) -> Result<()> {
        if x.rank() != 4 || x.shape()[1..] != self.input_shape {
            return dim_err(format!(
                "network expects [B x {:?}] input, got {:?}",
                self.input_shape,
                x.shape()
            ));
        }
        Ok(())
    }
}

fn flatten(x: Tensor) -> Result<Tensor> {
    let batch = x.shape()[0];
    let rest = x.len() / batch;
    x.into_reshape(&[batch, rest])
}

/// Per-sample output shape of one layer, or a description of the mismatch.
fn layer_output_shape(layer: &Layer, shape: &[usize]) -> std::result::Result<Vec<usize>, String> {
    match layer {
        Layer::Conv(p) => {
            if shape.len() != 3 {
                return Err(format!("conv expects a [C x H x W] input, got {shape:?}"));
            }
            if shape[0] != p.in_channels() {
                return Err(format!(
                    "conv expects {} input channels but receives {}",
                    p.in_channels(),
                    shape[0]
                ));
            }
            let k = p.kernel_size();
            if shape[1] < k || shape[2] < k {
                return Err(format!("kernel {k}x{k} larger than input {}x{}", shape[1], shape[2]));
            }
            Ok(vec![p.out_channels(), shape[1] - k + 1, shape[2] - k + 1])
        }
        Layer::Relu => Ok(shape.to_vec()),
        Layer::MaxPool(pool) => {
            if shape.len() != 3 {
                return Err(format!("maxpool expects a [C x H x W] input, got {shape:?}"));
            }
            let h = pool.output_extent(shape[1]).map_err(|e| e.to_string())?;
            let w = pool.output_extent(shape[2]).map_err(|e| e.to_string())?;
            Ok(vec![shape[0], h, w])
        }
        Layer::Flatten => Ok(vec![shape.iter().product()]),
        Layer::Fc(p) => {
            if shape.len() != 1 {
                return Err(format!("fc expects a flat input, got {shape:?}"));
            }
            if shape[0] != p.in_features() {
                return Err(format!(
                    "fc expects {} inputs but receives {}",
                    p.in_features(),
                    shape[0]
                ));
            }
            Ok(vec![p.out_features()])
        }
        Layer::SoftmaxXent => {
            if shape.len() != 1 {
                return Err(format!("loss expects flat logits, got {shape:?}"));
            }
            Ok(shape.to_vec())
        }
    }
}
