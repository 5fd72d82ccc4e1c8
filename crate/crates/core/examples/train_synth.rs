//! Trains a small CNN on the synthetic glyph set and prints the validation curve.

use dcck::data::{split_train_validation, synth_digits};
use dcck::layers::{InitConfig, LayerSpec, Network, SgdConfig};
use dcck::trainer::{finetune, DataSplits, FinetuneConfig, TrainerConfig};

fn main() -> dcck::Result<()> {
    let all = synth_digits(1200, 7)?;
    let (train, validation) = split_train_validation(&all, 0.2, 7)?;
    let data = DataSplits { train, validation, test: None };
    let spec = [
        LayerSpec::Conv { kernels: 6, size: 3 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2, stride: 2 },
        LayerSpec::Flatten,
        LayerSpec::Fc { outputs: 4 },
        LayerSpec::SoftmaxXent,
    ];
    let mut model = Network::from_spec([1, 12, 12], &spec, InitConfig { conv_std: 0.1, fc_gain: 1.0 }, 1)?;
    let trainer = TrainerConfig { batch_size: 32, sgd: SgdConfig { lr: 0.02, ..SgdConfig::default() }, ..TrainerConfig::default() };
    let cfg = FinetuneConfig { minibatches_per_eval: 10, patience: 3, max_evals: 40, ..FinetuneConfig::default() };
    for r in finetune(&mut model, &data, trainer, &cfg)? {
        println!("step {:>4}  epoch {:.2}  val {:.4}  {}", r.step, r.epoch, r.val_accuracy, r.event);
    }
    Ok(())
}
