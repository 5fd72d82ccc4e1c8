//! Saves a model with its trainer state, reloads it and resumes training on
//! exactly the same trajectory.

use dcck::checkpoint::{load, save};
use dcck::data::{split_train_validation, synth_digits};
use dcck::layers::{InitConfig, LayerSpec, Network};
use dcck::trainer::{DataSplits, Trainer, TrainerConfig};

fn main() -> dcck::Result<()> {
    let all = synth_digits(400, 4)?;
    let (train, validation) = split_train_validation(&all, 0.25, 4)?;
    let data = DataSplits { train, validation, test: None };
    let spec = [LayerSpec::Conv { kernels: 4, size: 3 }, LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::Fc { outputs: 4 }, LayerSpec::SoftmaxXent];
    let mut model = Network::from_spec([1, 12, 12], &spec, InitConfig { conv_std: 0.1, fc_gain: 1.0 }, 4)?;
    let cfg = TrainerConfig { batch_size: 16, ..TrainerConfig::default() };

    let mut trainer = Trainer::new(&data, cfg)?;
    for _ in 0..25 {
        trainer.train_step(&mut model)?;
    }
    let path = std::env::temp_dir().join("dcck_roundtrip.dcck");
    save(&model, Some(&trainer.state()), &path)?;
    println!("saved {} bytes to {}", std::fs::metadata(&path)?.len(), path.display());

    for _ in 0..10 {
        trainer.train_step(&mut model)?;
    }
    let (mut resumed, state) = load(&path)?;
    let mut again = Trainer::new(&data, cfg)?;
    again.restore_state(state.expect("state was saved"));
    for _ in 0..10 {
        again.train_step(&mut resumed)?;
    }
    println!("resumed run identical: {}", resumed == model);
    std::fs::remove_file(path)?;
    Ok(())
}
