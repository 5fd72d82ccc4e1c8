//! The `dcck` command line.
//!
//! Each run directory receives `model.dcck`, `metrics.csv`, `events.jsonl`
//! and `summary.json`, all reproducible from the config, plus `timing.json`
//! with wall-clock measurements that naturally differ between runs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::{export_kernel_grid, load, save};
use crate::config::{RunConfig, KEYS};
use crate::error::{Error, Result};
use crate::layers::Network;
use crate::surgery::{merge_layer, split_layer, MergeConfig, SplitConfig, SplitMode, WeightVariant};
use crate::trainer::{evaluate, forward_timings, median, DataSplits, EvalResult, MetricsSink, Trainer};

#[derive(Parser, Debug)]
#[command(name = "dcck", version, about = "Train CNNs and split/merge their conv kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Run configuration file; every key is optional.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Extra `section.key=value` entries applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the configured architecture from scratch.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Split one conv layer of a checkpoint.
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        mode: Option<SplitMode>,
        #[arg(long = "sigma-noise")]
        sigma_noise: Option<f32>,
        #[arg(long = "sigma-angle")]
        sigma_angle: Option<f64>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Merge one conv layer of a checkpoint down to `k` kernels.
    Merge {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        variant: Option<WeightVariant>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Train a baseline (or load `--in`), then run the split/merge schedule.
    Dcck {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Report accuracy of a checkpoint on the configured data.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long = "in")]
        input: PathBuf,
        /// train, validation or test (default: test when available).
        #[arg(long)]
        split: Option<String>,
    },
    /// Write the kernels of a conv layer as a PGM mosaic.
    ExportKernels {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long = "out")]
        output: PathBuf,
    },
}

fn keys_help(sections: &[&str]) -> String {
    let mut out = String::from("Config keys read:\n");
    for (key, doc) in KEYS {
        if sections.iter().any(|s| key.starts_with(&format!("{s}."))) {
            out.push_str(&format!("  {key:<28} {doc}\n"));
        }
    }
    out
}

fn command() -> clap::Command {
    let sections: [(&str, &[&str]); 5] = [
        ("train", &["data", "model", "train", "output", "timing"]),
        ("split", &["split"]),
        ("merge", &["merge"]),
        ("dcck", &["data", "model", "train", "split", "merge", "dcck", "output", "timing"]),
        ("eval", &["data"]),
    ];
    let mut cmd = Cli::command();
    for (name, secs) in sections {
        let help = keys_help(secs);
        cmd = cmd.mut_subcommand(name, |c| c.after_help(help));
    }
    cmd.mut_subcommand("export-kernels", |c| c.after_help("Reads no config keys."))
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&args.overrides)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Summary {
    validation_accuracy: f64,
    validation_loss: f64,
    test_error_percent: Option<f64>,
    param_count: usize,
    kernels: Vec<usize>,
    steps: u64,
}

#[derive(Serialize)]
struct Timing {
    forward_batch_size: usize,
    forward_batches: usize,
    forward_median_ms: f64,
    baseline_forward_median_ms: Option<f64>,
    wall_seconds: f64,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(format!("json: {e}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_err)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::at(path))?;
    Ok(())
}

fn summarize(model: &Network, data: &DataSplits, steps: u64) -> Result<Summary> {
    let val = evaluate(model, &data.validation)?;
    let test_error_percent = match &data.test {
        Some(t) => Some(evaluate(model, t)?.error_percent()),
        None => None,
    };
    Ok(Summary {
        validation_accuracy: val.accuracy,
        validation_loss: val.mean_loss,
        test_error_percent,
        param_count: model.param_count(),
        kernels: model.layers().iter().filter_map(|l| l.as_conv()).map(|p| p.out_channels()).collect(),
        steps,
    })
}

fn forward_median(model: &Network, data: &DataSplits, cfg: &RunConfig) -> Result<f64> {
    Ok(median(&forward_timings(model, &data.validation, cfg.timing_batch, cfg.timing_batches)?))
}

fn cmd_train_or_dcck(cfg: &RunConfig, input: Option<&Path>, dcck: bool) -> Result<()> {
    let start = Instant::now();
    let data = cfg.load_data()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(Error::at(out))?;
    let sink = MetricsSink::create(&out.join("metrics.csv"), &out.join("events.jsonl"))?;
    let mut trainer = Trainer::new(&data, cfg.trainer)?.with_sink(sink);
    let mut model = match input {
        Some(path) => load(path)?.0,
        None => {
            let mut m = cfg.build_model()?;
            trainer.finetune(&mut m, &cfg.finetune, "baseline")?;
            m
        }
    };
    let mut baseline_ms = None;
    if dcck {
        save(&model, None, &out.join("baseline.dcck"))?;
        baseline_ms = Some(forward_median(&model, &data, cfg)?);
        trainer.dcck(&mut model, &cfg.schedule)?;
    }
    save(&model, Some(&trainer.state()), &out.join("model.dcck"))?;
    write_json(&out.join("summary.json"), &summarize(&model, &data, trainer.step())?)?;
    let timing = Timing {
        forward_batch_size: cfg.timing_batch,
        forward_batches: cfg.timing_batches,
        forward_median_ms: forward_median(&model, &data, cfg)?,
        baseline_forward_median_ms: baseline_ms,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("timing.json"), &timing)?;
    println!("{}", out.display());
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(value).map_err(json_err)?);
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    split: &'a str,
    accuracy: f64,
    error_percent: f64,
    mean_loss: f64,
    correct: usize,
    total: usize,
}

fn cmd_eval(cfg: &RunConfig, input: &Path, split: Option<&str>) -> Result<EvalResult> {
    let (model, _) = load(input)?;
    let data = cfg.load_data()?;
    let name = split.unwrap_or(if data.test.is_some() { "test" } else { "validation" });
    let set = match name {
        "train" => &data.train,
        "validation" => &data.validation,
        "test" => data.test.as_ref().ok_or_else(|| Error::InvalidArgument("no test set configured".into()))?,
        other => return Err(Error::InvalidArgument(format!("unknown split '{other}'"))),
    };
    let r = evaluate(&model, set)?;
    print_json(&EvalOutput {
        split: name,
        accuracy: r.accuracy,
        error_percent: r.error_percent(),
        mean_loss: r.mean_loss,
        correct: r.correct,
        total: r.total,
    })?;
    Ok(r)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => cmd_train_or_dcck(&load_config(&config)?, None, false),
        Command::Dcck { config, input } => cmd_train_or_dcck(&load_config(&config)?, input.as_deref(), true),
        Command::Split { config, layer, mode, sigma_noise, sigma_angle, input, output } => {
            let cfg = load_config(&config)?;
            let base = cfg.schedule.split;
            let split = SplitConfig {
                mode: mode.unwrap_or(base.mode),
                sigma_noise: sigma_noise.unwrap_or(base.sigma_noise),
                sigma_angle: sigma_angle.unwrap_or(base.sigma_angle),
                seed: base.seed,
            };
            let (mut model, _) = load(&input)?;
            let report = split_layer(&mut model, layer, &split)?;
            save(&model, None, &output)?;
            print_json(&report)
        }
        Command::Merge { config, layer, k, variant, input, output } => {
            let cfg = load_config(&config)?;
            let base = cfg.schedule.merge;
            let merge = match variant {
                Some(v) => MergeConfig { weight_variant: v, bias_variant: v.paired_bias(), ..base },
                None => base,
            };
            let (mut model, _) = load(&input)?;
            let report = merge_layer(&mut model, layer, &MergeConfig { k: k.unwrap_or(base.k), ..merge })?;
            save(&model, None, &output)?;
            print_json(&report)
        }
        Command::Eval { config, input, split } => cmd_eval(&load_config(&config)?, &input, split.as_deref()).map(|_| ()),
        Command::ExportKernels { input, layer, output } => {
            let (model, _) = load(&input)?;
            let grid = export_kernel_grid(&model, layer, &output)?;
            println!("{}x{} {}", grid.width, grid.height, output.display());
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
/// Failures print one `error: ...` line on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = Cli::from_arg_matches(&matches).map_err(|e| Error::InvalidArgument(e.to_string())).and_then(run);
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
