use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{commit, find_consumer, remix_inputs, rotate_kernel, SurgeryKind, SurgeryReport};
use crate::error::{arg_err, Error, Result};
use crate::layers::{ConvLayerParams, Layer, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Append one noise-perturbed copy of every kernel (`N -> 2N`).
    Noise,
    /// Append one rotated copy of every kernel (`N -> 2N`).
    Rotate,
    /// Append a noised copy, then a rotated copy of every original (`N -> 3N`).
    Both,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(SplitMode::Noise),
            "rotate" => Ok(SplitMode::Rotate),
            "both" => Ok(SplitMode::Both),
            other => arg_err(format!("unknown split mode '{other}' (noise, rotate, both)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitConfig {
    /// Standard deviation of the additive Gaussian noise, per weight element.
    pub sigma_noise: f32,
    /// Standard deviation of the rotation angle in radians, per kernel.
    pub sigma_angle: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitConfig {
    pub fn growth_factor(&self) -> usize {
        match self.mode {
            SplitMode::Noise | SplitMode::Rotate => 2,
            SplitMode::Both => 3,
        }
    }
}

/// Grows conv layer `layer_index` by appending transformed copies of every kernel.
///
/// Copies keep their source kernel's bias. In the consumer, an original and
/// its noise copy each receive half of the original incoming weights, and
/// rotated copies start with zero incoming weights.
pub fn split_layer(model: &mut Network, layer_index: usize, cfg: &SplitConfig) -> Result<SurgeryReport> {
    if !(cfg.sigma_noise >= 0.0 && cfg.sigma_noise.is_finite()) || !(cfg.sigma_angle >= 0.0 && cfg.sigma_angle.is_finite()) {
        return arg_err(format!(
            "split sigmas must be finite and non-negative (noise {}, angle {})",
            cfg.sigma_noise, cfg.sigma_angle
        ));
    }
    let consumer = find_consumer(model, layer_index)?;
    let params = model.layers()[layer_index].as_conv().expect("find_consumer checked conv").clone();
    let (n, d, k) = (params.out_channels(), params.in_channels(), params.kernel_size());
    let p = params.kernel_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = params.weights().data();
    let biases = params.biases().data();

    let mut new_weights = weights.to_vec();
    let mut new_biases = biases.to_vec();
    let mut mixes: Vec<Vec<(usize, f32)>> = Vec::new();
    let with_noise = matches!(cfg.mode, SplitMode::Noise | SplitMode::Both);
    let with_rotation = matches!(cfg.mode, SplitMode::Rotate | SplitMode::Both);
    let original_coeff = if with_noise { 0.5 } else { 1.0 };
    mixes.extend((0..n).map(|i| vec![(i, original_coeff)]));

    if with_noise {
        let noise = Normal::new(0.0f32, cfg.sigma_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        new_weights.extend(weights.iter().map(|&w| w + noise.sample(&mut rng)));
        new_biases.extend_from_slice(biases);
        mixes.extend((0..n).map(|i| vec![(i, 0.5)]));
    }
    if with_rotation {
        let jitter = Normal::new(0.0f64, cfg.sigma_angle).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for i in 0..n {
            let angle = jitter.sample(&mut rng);
            let kernel = Tensor::new(&[d, k, k], weights[i * p..(i + 1) * p].to_vec())?;
            new_weights.extend_from_slice(rotate_kernel(&kernel, angle)?.data());
        }
        new_biases.extend_from_slice(biases);
        mixes.extend((0..n).map(|_| Vec::new()));
    }

    let grown = n * cfg.growth_factor();
    let producer = Layer::Conv(ConvLayerParams::new(
        Tensor::new(&[grown, d, k, k], new_weights)?,
        Tensor::new(&[grown], new_biases)?,
    )?);
    let rewired = remix_inputs(&model.layers()[consumer.index], consumer, &mixes)?;
    let params_before = model.param_count();
    commit(model, layer_index, producer, consumer.index, rewired)?;
    Ok(SurgeryReport {
        kind: SurgeryKind::Split,
        layer: layer_index,
        consumer: consumer.index,
        kernels_before: n,
        kernels_after: grown,
        params_before,
        params_after: model.param_count(),
        distortion: None,
    })
}
