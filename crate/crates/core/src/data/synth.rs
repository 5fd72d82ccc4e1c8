use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// Side length of the synthetic glyph images.
pub const SYNTH_SIZE: usize = 12;
/// Glyph classes, in label order.
pub const SYNTH_CLASSES: [&str; 4] = ["bar", "cross", "ring", "dot"];

/// `n` programmatic 12x12 glyphs (bar, cross, ring, dot) with labels assigned
/// round-robin and seeded jitter in position, size, intensity and background noise.
pub fn synth_digits(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return arg_err("synth_digits needs at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = SYNTH_SIZE;
    let mut data = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % SYNTH_CLASSES.len();
        let cy = 5.5 + rng.random_range(-1.5..1.5);
        let cx = 5.5 + rng.random_range(-1.5..1.5);
        let scale: f64 = rng.random_range(0.8..1.2);
        let intensity: f32 = rng.random_range(0.6..1.0);
        for r in 0..side {
            for c in 0..side {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let on = match label {
                    0 => dx.abs() <= 1.0 && dy.abs() <= 4.0 * scale,
                    1 => (dx.abs() <= 0.8 && dy.abs() <= 4.0 * scale) || (dy.abs() <= 0.8 && dx.abs() <= 4.0 * scale),
                    2 => ((dy * dy + dx * dx).sqrt() - 3.5 * scale).abs() <= 0.8,
                    _ => (dy * dy + dx * dx).sqrt() <= 1.8 * scale,
                };
                let noise: f32 = rng.random_range(0.0..0.15);
                let v = if on { intensity } else { 0.0 } + noise;
                data.push(v.min(1.0));
            }
        }
        labels.push(label);
    }
    LabeledDataset::new(Tensor::new(&[n, 1, side, side], data)?, labels, SYNTH_CLASSES.len())
}
