use super::network::{Gradients, Layer, Network, ParamGrads};
use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 0.01, momentum: 0.9, weight_decay: 5e-4 }
    }
}

/// Momentum SGD: `v <- momentum*v - lr*(g + weight_decay*w); w <- w + v`.
///
/// Velocity buffers are created on first use and must be reset (via
/// [`Sgd::reset`]) whenever surgery changes parameter shapes.
#[derive(Clone, Debug, Default)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<Option<ParamGrads>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Self { config, velocity: Vec::new() }
    }

    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    pub fn velocity(&self) -> &[Option<ParamGrads>] {
        &self.velocity
    }

    /// Replaces the velocity buffers, e.g. when resuming from a checkpoint.
    pub fn set_velocity(&mut self, velocity: Vec<Option<ParamGrads>>) {
        self.velocity = velocity;
    }

    pub fn step(&mut self, model: &mut Network, grads: &Gradients) -> Result<()> {
        let layers = model.layers_mut();
        if grads.len() != layers.len() {
            return dim_err(format!("{} gradient slots for {} layers", grads.len(), layers.len()));
        }
        if self.velocity.len() != layers.len() {
            self.velocity = vec![None; layers.len()];
        }
        let SgdConfig { lr, momentum, weight_decay } = self.config;
        for (idx, (layer, grad)) in layers.iter_mut().zip(grads).enumerate() {
            let (weights, biases) = match layer {
                Layer::Conv(p) => p.data_mut(),
                Layer::Fc(p) => p.data_mut(),
                _ => continue,
            };
            let Some(grad) = grad else { continue };
            if grad.weights.len() != weights.len() || grad.biases.len() != biases.len() {
                return dim_err(format!("layer {idx}: gradient shape does not match parameters"));
            }
            let vel = self.velocity[idx].get_or_insert_with(|| ParamGrads {
                weights: Tensor::zeros_like(&grad.weights),
                biases: Tensor::zeros_like(&grad.biases),
            });
            if vel.weights.len() != weights.len() || vel.biases.len() != biases.len() {
                return dim_err(format!("layer {idx}: stale velocity buffer after a shape change"));
            }
            for (params, g, v) in [
                (weights, grad.weights.data(), vel.weights.data_mut()),
                (biases, grad.biases.data(), vel.biases.data_mut()),
            ] {
                for ((w, &g), v) in params.iter_mut().zip(g).zip(v.iter_mut()) {
                    *v = momentum * *v - lr * (g + weight_decay * *w);
                    *w += *v;
                }
            }
        }
        Ok(())
    }
}
