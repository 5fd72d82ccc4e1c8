//! Run configuration files.
//!
//! One entry per line, `section.name = value`. Blank lines and anything after
//! `#` are ignored. Every key may appear once, except `model.layer`, which is
//! repeated to list the architecture in order. Layer descriptors:
//!
//! ```text
//! conv <kernels> <size>    relu    maxpool <window> <stride>
//! flatten    fc <outputs>    softmax_xent
//! ```
//!
//! Reals accept `inf`. Leaving out every `model.layer` line selects the MNIST
//! baseline (conv 100x5x5, pool, conv 50x5x5, pool, fc 100, fc 10).

use std::path::{Path, PathBuf};

use crate::data::{
    holdout, load_mnist_idx, split_train_validation, synth_digits, LabeledDataset, MnistFiles, DATA_DIR_ENV,
    SUBSET_IMAGES, SUBSET_LABELS,
};
use crate::error::{Error, Result};
use crate::layers::{InitConfig, LayerSpec, Network};
use crate::surgery::{BiasVariant, MergeConfig, SplitConfig, SplitMode, WeightVariant};
use crate::trainer::{DataSplits, DcckSchedule, FinetuneConfig, Order, TrainerConfig};

/// Every recognized key with a one-line description; the CLI help is built from this.
pub const KEYS: &[(&str, &str)] = &[
    ("data.source", "mnist | mnist_subset | synth (default mnist)"),
    ("data.dir", "dataset directory (default $DCCK_DATA_DIR, else data/mnist)"),
    ("data.synth_count", "synthetic sample count (default 2000)"),
    ("data.synth_seed", "synthetic generator seed (default 1)"),
    ("data.test_count", "samples held out as test set for mnist_subset/synth (default 2000 / 0)"),
    ("data.validation_fraction", "fraction of training data held out for validation (default 0.1)"),
    ("data.split_seed", "seed of the test and validation hold-outs (default 0)"),
    ("model.input", "sample shape CxHxW (default 1x28x28)"),
    ("model.layer", "layer descriptor, repeated in order"),
    ("model.seed", "weight init seed (default 1)"),
    ("model.conv_std", "conv weight init std (default 0.01)"),
    ("model.fc_gain", "fc init std is gain/sqrt(fan_in) (default 1.0)"),
    ("train.batch_size", "minibatch size (default 64)"),
    ("train.lr", "learning rate (default 0.01)"),
    ("train.momentum", "momentum (default 0.9)"),
    ("train.weight_decay", "L2 weight decay (default 5e-4)"),
    ("train.shuffle_seed", "epoch shuffle seed (default 0)"),
    ("train.minibatches_per_eval", "M, minibatches per SGD burst (default 100)"),
    ("train.delta", "delta2, fine-tune improvement threshold; inf = one burst (default 0)"),
    ("train.patience", "failed evaluations before a loop exits; 0 = budget only (default 3)"),
    ("train.max_evals", "evaluation cap per fine-tune (default 200)"),
    ("train.lr_drops", "plateaus answered by lr x0.1 before exiting (default 0)"),
    ("train.track_test", "also record test error at each evaluation (default false)"),
    ("split.mode", "noise | rotate | both (default noise)"),
    ("split.sigma_noise", "noise std per weight (default 0.01)"),
    ("split.sigma_angle", "rotation angle std in radians (default 0.2)"),
    ("split.seed", "split seed (default 1)"),
    ("merge.k", "kernels kept per merged layer (default 100)"),
    ("merge.variant", "nearest_filter | centroid (default nearest_filter)"),
    ("merge.bias", "matched | cluster_mean (default: paired with the variant)"),
    ("merge.seed", "k-means seed (default 1)"),
    ("merge.max_iters", "k-means iteration cap (default 300)"),
    ("merge.tol", "k-means relative distortion tolerance (default 1e-6)"),
    ("merge.restarts", "k-means restarts (default 1)"),
    ("dcck.layers", "comma-separated target layer indices (default 0)"),
    ("dcck.order", "split_first | merge_first (default split_first)"),
    ("dcck.delta0", "outer-loop improvement threshold (default 0)"),
    ("dcck.delta1", "split-loop improvement threshold (default 0)"),
    ("dcck.max_outer_rounds", "outer round cap (default 1)"),
    ("dcck.max_split_rounds", "split rounds per outer round (default 1)"),
    ("dcck.round_patience", "non-improving rounds before a split or outer loop exits (default 1)"),
    ("dcck.max_kernels", "never split a layer beyond this many kernels (default 1000)"),
    ("output.dir", "run output directory (default runs/default)"),
    ("timing.batch_size", "forward timing batch size (default 10)"),
    ("timing.batches", "forward timing batch count (default 100)"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// Official 60k/10k IDX files.
    Mnist,
    /// One 10k IDX pair, test set held out from it.
    MnistSubset,
    Synth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub dir: Option<PathBuf>,
    pub synth_count: usize,
    pub synth_seed: u64,
    /// `None` means the per-source default.
    pub test_count: Option<usize>,
    pub validation_fraction: f64,
    pub split_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
    pub init: InitConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
    pub finetune: FinetuneConfig,
    pub schedule: DcckSchedule,
    pub output_dir: PathBuf,
    pub timing_batch: usize,
    pub timing_batches: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let finetune = FinetuneConfig::default();
        Self {
            data: DataConfig {
                source: DataSource::Mnist,
                dir: None,
                synth_count: 2000,
                synth_seed: 1,
                test_count: None,
                validation_fraction: 0.1,
                split_seed: 0,
            },
            model: ModelConfig {
                input: [1, 28, 28],
                layers: LayerSpec::mnist_baseline(100),
                seed: 1,
                init: InitConfig::default(),
            },
            trainer: TrainerConfig::default(),
            finetune,
            schedule: DcckSchedule {
                delta0: 0.0,
                delta1: 0.0,
                finetune,
                split: SplitConfig { sigma_noise: 0.01, sigma_angle: 0.2, mode: SplitMode::Noise, seed: 1 },
                merge: MergeConfig::new(100, WeightVariant::NearestFilter, 1),
                target_layers: vec![0],
                order: Order::SplitFirst,
                max_outer_rounds: 1,
                max_split_rounds: 1,
                round_patience: 1,
                max_kernels: 1000,
            },
            output_dir: PathBuf::from("runs/default"),
            timing_batch: 10,
            timing_batches: 100,
        }
    }
}

fn parse_layer(value: &str) -> std::result::Result<LayerSpec, String> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("'{s}' is not a non-negative integer"));
    let arity = |n: usize| {
        if parts.len() == n + 1 {
            Ok(())
        } else {
            Err(format!("'{}' takes {n} argument(s), got {}", parts[0], parts.len() - 1))
        }
    };
    match parts.first().copied() {
        None => Err("empty layer descriptor".into()),
        Some("conv") => arity(2).and_then(|_| Ok(LayerSpec::Conv { kernels: num(parts[1])?, size: num(parts[2])? })),
        Some("relu") => arity(0).map(|_| LayerSpec::Relu),
        Some("maxpool") => {
            arity(2).and_then(|_| Ok(LayerSpec::MaxPool { window: num(parts[1])?, stride: num(parts[2])? }))
        }
        Some("flatten") => arity(0).map(|_| LayerSpec::Flatten),
        Some("fc") => arity(1).and_then(|_| Ok(LayerSpec::Fc { outputs: num(parts[1])? })),
        Some("softmax_xent") => arity(0).map(|_| LayerSpec::SoftmaxXent),
        Some(other) => Err(format!("unknown layer type '{other}'")),
    }
}

fn parse<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse '{value}': {e}"))
}

fn parse_shape(value: &str) -> std::result::Result<[usize; 3], String> {
    let dims: Vec<usize> = value.split('x').map(|d| parse(d.trim())).collect::<std::result::Result<_, _>>()?;
    <[usize; 3]>::try_from(dims).map_err(|_| format!("expected CxHxW, got '{value}'"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, 1)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides, e.g. from `--set`; lines are reported as 0.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            self.apply_text(o, 0)?;
        }
        Ok(())
    }

    fn apply_text(&mut self, text: &str, first_line: usize) -> Result<()> {
        let mut seen: Vec<String> = Vec::new();
        let mut layers: Vec<LayerSpec> = Vec::new();
        let mut bias_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = if first_line == 0 { 0 } else { first_line + i };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |key: &str, message: String| Error::Config { line, key: key.to_string(), message };
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(content, "expected 'section.key = value'".into()));
            };
            let (key, value) = (key.trim(), value.trim());
            if key != "model.layer" {
                if seen.iter().any(|k| k == key) {
                    return Err(err(key, "key given twice".into()));
                }
                seen.push(key.to_string());
            }
            if key == "merge.bias" {
                bias_set = true;
            }
            self.apply(key, value, &mut layers).map_err(|m| err(key, m))?;
        }
        if !layers.is_empty() {
            self.model.layers = layers;
        }
        if seen.iter().any(|k| k == "merge.variant") && !bias_set {
            self.schedule.merge.bias_variant = self.schedule.merge.weight_variant.paired_bias();
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, v: &str, layers: &mut Vec<LayerSpec>) -> std::result::Result<(), String> {
        let enum_err = |e: Error| e.to_string();
        let s = &mut self.schedule;
        match key {
            "data.source" => {
                self.data.source = match v {
                    "mnist" => DataSource::Mnist,
                    "mnist_subset" => DataSource::MnistSubset,
                    "synth" => DataSource::Synth,
                    other => return Err(format!("unknown source '{other}'")),
                }
            }
            "data.dir" => self.data.dir = Some(PathBuf::from(v)),
            "data.synth_count" => self.data.synth_count = parse(v)?,
            "data.synth_seed" => self.data.synth_seed = parse(v)?,
            "data.test_count" => self.data.test_count = Some(parse(v)?),
            "data.validation_fraction" => self.data.validation_fraction = parse(v)?,
            "data.split_seed" => self.data.split_seed = parse(v)?,
            "model.input" => self.model.input = parse_shape(v)?,
            "model.layer" => layers.push(parse_layer(v)?),
            "model.seed" => self.model.seed = parse(v)?,
            "model.conv_std" => self.model.init.conv_std = parse(v)?,
            "model.fc_gain" => self.model.init.fc_gain = parse(v)?,
            "train.batch_size" => self.trainer.batch_size = parse(v)?,
            "train.lr" => self.trainer.sgd.lr = parse(v)?,
            "train.momentum" => self.trainer.sgd.momentum = parse(v)?,
            "train.weight_decay" => self.trainer.sgd.weight_decay = parse(v)?,
            "train.shuffle_seed" => self.trainer.shuffle_seed = parse(v)?,
            "train.track_test" => self.trainer.track_test = parse(v)?,
            "train.minibatches_per_eval" => self.finetune.minibatches_per_eval = parse(v)?,
            "train.delta" => self.finetune.delta = parse(v)?,
            "train.patience" => self.finetune.patience = parse(v)?,
            "train.max_evals" => self.finetune.max_evals = parse(v)?,
            "train.lr_drops" => self.finetune.lr_drops = parse(v)?,
            "split.mode" => s.split.mode = v.parse().map_err(enum_err)?,
            "split.sigma_noise" => s.split.sigma_noise = parse(v)?,
            "split.sigma_angle" => s.split.sigma_angle = parse(v)?,
            "split.seed" => s.split.seed = parse(v)?,
            "merge.k" => s.merge.k = parse(v)?,
            "merge.variant" => s.merge.weight_variant = v.parse::<WeightVariant>().map_err(enum_err)?,
            "merge.bias" => s.merge.bias_variant = v.parse::<BiasVariant>().map_err(enum_err)?,
            "merge.seed" => s.merge.seed = parse(v)?,
            "merge.max_iters" => s.merge.max_iters = parse(v)?,
            "merge.tol" => s.merge.tol = parse(v)?,
            "merge.restarts" => s.merge.restarts = parse(v)?,
            "dcck.layers" => {
                s.target_layers = v.split(',').map(|t| parse(t.trim())).collect::<std::result::Result<_, _>>()?
            }
            "dcck.order" => s.order = v.parse().map_err(enum_err)?,
            "dcck.delta0" => s.delta0 = parse(v)?,
            "dcck.delta1" => s.delta1 = parse(v)?,
            "dcck.max_outer_rounds" => s.max_outer_rounds = parse(v)?,
            "dcck.max_split_rounds" => s.max_split_rounds = parse(v)?,
            "dcck.round_patience" => s.round_patience = parse(v)?,
            "dcck.max_kernels" => s.max_kernels = parse(v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "timing.batch_size" => self.timing_batch = parse(v)?,
            "timing.batches" => self.timing_batches = parse(v)?,
            _ => return Err("unknown key".into()),
        }
        self.schedule.finetune = self.finetune;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data
            .dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    /// Loads and partitions the configured dataset. Hold-outs are seeded by
    /// `data.split_seed`, so the same config always yields the same parts.
    pub fn load_data(&self) -> Result<DataSplits> {
        let d = &self.data;
        let (pool, test) = match d.source {
            DataSource::Mnist => {
                let files = MnistFiles::official(&self.data_dir());
                let train = load_mnist_idx(&files.train_images, &files.train_labels)?;
                let test = load_mnist_idx(&files.test_images, &files.test_labels)?;
                (train, Some(test))
            }
            DataSource::MnistSubset => {
                let dir = self.data_dir();
                let all = load_mnist_idx(&dir.join(SUBSET_IMAGES), &dir.join(SUBSET_LABELS))?;
                self.hold_test(all, d.test_count.unwrap_or(2000))?
            }
            DataSource::Synth => self.hold_test(synth_digits(d.synth_count, d.synth_seed)?, d.test_count.unwrap_or(0))?,
        };
        let (train, validation) = split_train_validation(&pool, d.validation_fraction, d.split_seed)?;
        Ok(DataSplits { train, validation, test })
    }

    fn hold_test(&self, all: LabeledDataset, count: usize) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
        if count == 0 {
            return Ok((all, None));
        }
        let (rest, test) = holdout(&all, count, self.data.split_seed.wrapping_add(1))?;
        Ok((rest, Some(test)))
    }

    pub fn build_model(&self) -> Result<Network> {
        Network::from_spec(self.model.input, &self.model.layers, self.model.init, self.model.seed)
    }
}
