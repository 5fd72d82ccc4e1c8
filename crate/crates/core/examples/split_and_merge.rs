//! Splits conv1 of the MNIST baseline both ways, merges it back, and reports
//! how far the outputs moved at each step.

use dcck::layers::{InitConfig, LayerSpec, Network};
use dcck::surgery::{merge_layer, split_layer, MergeConfig, SplitConfig, SplitMode, WeightVariant};
use dcck::Tensor;

fn relative_change(a: &Network, b: &Network, x: &Tensor) -> dcck::Result<f32> {
    let (ya, yb) = (a.forward(x)?, b.forward(x)?);
    let scale = ya.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    Ok(ya.max_abs_diff(&yb)? / scale)
}

fn main() -> dcck::Result<()> {
    let net = Network::from_spec([1, 28, 28], &LayerSpec::mnist_baseline(100), InitConfig::default(), 1)?;
    let x = Tensor::from_fn(&[4, 1, 28, 28], |i| ((i * 37) % 101) as f32 / 100.0)?;

    for (mode, sigma_noise, sigma_angle) in [(SplitMode::Noise, 0.0, 0.0), (SplitMode::Noise, 0.01, 0.0), (SplitMode::Rotate, 0.0, 0.2)] {
        let mut grown = net.clone();
        let report = split_layer(&mut grown, 0, &SplitConfig { sigma_noise, sigma_angle, mode, seed: 3 })?;
        println!(
            "{mode:?} split (noise {sigma_noise}, angle {sigma_angle}): {} -> {} kernels, params {} -> {}, output change {:.2e}",
            report.kernels_before,
            report.kernels_after,
            report.params_before,
            report.params_after,
            relative_change(&net, &grown, &x)?
        );
        let mut merged = grown.clone();
        let report = merge_layer(&mut merged, 0, &MergeConfig::new(100, WeightVariant::NearestFilter, 3))?;
        println!(
            "  merged back to {}: distortion {:.3e}, output change vs original {:.2e}",
            report.kernels_after,
            report.distortion.unwrap_or(0.0),
            relative_change(&net, &merged, &x)?
        );
    }
    Ok(())
}
