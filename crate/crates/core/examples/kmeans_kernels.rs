//! Clusters the conv1 kernels of a trained synthetic model and prints the
//! distortion for each cluster count.

use dcck::data::{split_train_validation, synth_digits};
use dcck::kmeans::{kmeans, KMeansConfig};
use dcck::layers::{InitConfig, LayerSpec, Network, SgdConfig};
use dcck::trainer::{finetune, DataSplits, FinetuneConfig, TrainerConfig};

fn main() -> dcck::Result<()> {
    let all = synth_digits(1000, 2)?;
    let (train, validation) = split_train_validation(&all, 0.2, 2)?;
    let data = DataSplits { train, validation, test: None };
    let spec = [
        LayerSpec::Conv { kernels: 16, size: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Fc { outputs: 4 },
        LayerSpec::SoftmaxXent,
    ];
    let mut model = Network::from_spec([1, 12, 12], &spec, InitConfig { conv_std: 0.1, fc_gain: 1.0 }, 2)?;
    let trainer = TrainerConfig { batch_size: 32, sgd: SgdConfig { lr: 0.02, ..SgdConfig::default() }, ..TrainerConfig::default() };
    finetune(&mut model, &data, trainer, &FinetuneConfig { minibatches_per_eval: 20, max_evals: 10, ..FinetuneConfig::default() })?;

    let conv = model.layers()[0].as_conv().expect("layer 0 is conv");
    let points = conv.weights().reshape(&[conv.out_channels(), conv.kernel_len()])?;
    for k in [1, 2, 4, 8, 12, 16] {
        let out = kmeans(&points, &KMeansConfig { restarts: 4, ..KMeansConfig::new(k, 5) })?;
        println!("k {k:>2}  distortion {:.5}  iterations {:>2}  sizes {:?}", out.distortion, out.history.len(), out.cluster_sizes);
    }
    Ok(())
}
