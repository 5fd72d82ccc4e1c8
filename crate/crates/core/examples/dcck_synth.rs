//! The full split/merge schedule on the synthetic glyph set, driven by
//! `configs/synth_smoke.cfg`.

use std::path::Path;

use dcck::config::RunConfig;
use dcck::trainer::{evaluate, Trainer};

fn main() -> dcck::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synth_smoke.cfg");
    let mut cfg = RunConfig::from_file(&path)?;
    cfg.apply_overrides(&["dcck.max_outer_rounds=2".to_string(), "dcck.max_split_rounds=2".to_string()])?;
    let data = cfg.load_data()?;
    let mut model = cfg.build_model()?;
    let mut trainer = Trainer::new(&data, cfg.trainer)?;
    trainer.finetune(&mut model, &cfg.finetune, "baseline")?;
    println!("baseline: val {:.4}, {} params", evaluate(&model, &data.validation)?.accuracy, model.param_count());
    trainer.dcck(&mut model, &cfg.schedule)?;
    for e in &trainer.history().events {
        println!(
            "round {} step {:>4}: {:?} layer {} {} -> {} kernels (val before {:.4})",
            e.outer_round, e.step, e.report.kind, e.report.layer, e.report.kernels_before, e.report.kernels_after, e.val_accuracy_before
        );
    }
    println!("final: val {:.4}, {} params", evaluate(&model, &data.validation)?.accuracy, model.param_count());
    if let Some(test) = &data.test {
        println!("test error {:.2}%", evaluate(&model, test)?.error_percent());
    }
    Ok(())
}
