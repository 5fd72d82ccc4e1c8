//! Median forward time per batch of 10 for the MNIST baseline at several conv1 widths.

use dcck::data::LabeledDataset;
use dcck::layers::{InitConfig, LayerSpec, Network};
use dcck::surgery::{merge_layer, MergeConfig, WeightVariant};
use dcck::trainer::{forward_timings, median};
use dcck::Tensor;

fn main() -> dcck::Result<()> {
    let images = Tensor::from_fn(&[10, 1, 28, 28], |i| ((i * 31) % 97) as f32 / 96.0)?;
    let set = LabeledDataset::new(images, vec![0; 10], 10)?;
    let base = Network::from_spec([1, 28, 28], &LayerSpec::mnist_baseline(200), InitConfig::default(), 1)?;
    for k in [200, 150, 100, 50, 25] {
        let mut model = base.clone();
        merge_layer(&mut model, 0, &MergeConfig::new(k, WeightVariant::NearestFilter, 1))?;
        let ms = median(&forward_timings(&model, &set, 10, 100)?);
        println!("conv1 {k:>3} kernels  {:>8} params  {ms:.3} ms", model.param_count());
    }
    Ok(())
}
