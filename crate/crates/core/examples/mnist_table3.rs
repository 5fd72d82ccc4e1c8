//! Baseline, split-200 and merge-100 test errors on the 10,000-digit MNIST
//! subset for one seed (`configs/mnist_subset.cfg`).
//!
//! `cargo run --release --example mnist_table3 -- 2`

use std::path::Path;

use dcck::config::RunConfig;
use dcck::surgery::{merge_layer, split_layer};
use dcck::trainer::{evaluate, FinetuneConfig, Trainer, TrainerConfig};

fn main() -> dcck::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut cfg = RunConfig::from_file(&root.join("configs/mnist_subset.cfg"))?;
    let mut overrides = vec![format!("model.seed={seed}"), format!("train.shuffle_seed={seed}")];
    if std::env::var_os(dcck::data::DATA_DIR_ENV).is_none() {
        overrides.push(format!("data.dir={}", root.join("data/mnist").display()));
    }
    cfg.apply_overrides(&overrides)?;
    let data = cfg.load_data()?;
    let test = data.test.as_ref().expect("mnist_subset holds out a test set");
    let report = |name: &str, m: &dcck::layers::Network| -> dcck::Result<()> {
        println!("{name:<10} {:>7} params  test error {:.2}%", m.param_count(), evaluate(m, test)?.error_percent());
        Ok(())
    };

    let mut model = cfg.build_model()?;
    Trainer::new(&data, cfg.trainer)?.finetune(&mut model, &cfg.finetune, "baseline")?;
    report("baseline", &model)?;

    let more = TrainerConfig { shuffle_seed: seed + 100, ..cfg.trainer };
    split_layer(&mut model, 0, &cfg.schedule.split)?;
    Trainer::new(&data, more)?.finetune(&mut model, &FinetuneConfig { max_evals: 4, ..cfg.finetune }, "split_finetune")?;
    report("split-200", &model)?;

    merge_layer(&mut model, 0, &cfg.schedule.merge)?;
    Trainer::new(&data, more)?.finetune(&mut model, &FinetuneConfig { max_evals: 2, ..cfg.finetune }, "merge_finetune")?;
    report("merge-100", &model)
}
