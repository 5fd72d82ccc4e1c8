//! SGD fine-tuning and the split/merge schedule.
//!
//! A fine-tune loop alternates bursts of `M` minibatches with a validation
//! evaluation. An evaluation counts as a failure when it does not beat the
//! best accuracy seen in the loop by more than `delta`; `patience`
//! consecutive failures end the loop, and the best snapshot is restored.

mod eval;
mod metrics;

pub use eval::{evaluate, forward_timings, median, predictions, EvalResult};
pub use metrics::{write_metrics_csv, MetricsRecord, MetricsSink, StructuralEvent};

use serde::{Deserialize, Serialize};

use crate::data::{BatchIterator, LabeledDataset};
use crate::error::{arg_err, Error, Result};
use crate::layers::{Gradients, Network, ParamGrads, Sgd, SgdConfig};
use crate::surgery::{merge_layer, split_layer, MergeConfig, SplitConfig, SurgeryReport};

/// Disjoint train / validation parts, plus an optional test set that is only
/// ever reported, never used for decisions.
#[derive(Clone, Debug)]
pub struct DataSplits {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: Option<LabeledDataset>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub sgd: SgdConfig,
    /// Also evaluate the test set at every record.
    pub track_test: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self { batch_size: 64, shuffle_seed: 0, sgd: SgdConfig::default(), track_test: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinetuneConfig {
    /// Minibatches per SGD burst (`M`).
    pub minibatches_per_eval: usize,
    /// Required improvement in accuracy (fraction units, `delta2`).
    /// `f64::INFINITY` runs exactly one burst.
    pub delta: f64,
    /// Consecutive failures before leaving the loop; 0 never stops on a
    /// plateau and relies on `max_evals`.
    pub patience: usize,
    pub max_evals: usize,
    /// How many times a plateau multiplies the learning rate by 0.1 and
    /// resets the failure count before the loop is allowed to exit.
    pub lr_drops: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { minibatches_per_eval: 100, delta: 0.0, patience: 3, max_evals: 200, lr_drops: 0 }
    }
}

impl FinetuneConfig {
    fn validate(&self) -> Result<()> {
        if self.minibatches_per_eval == 0 {
            return arg_err("minibatches_per_eval must be at least 1");
        }
        if !(self.delta >= 0.0) {
            return arg_err(format!("delta must be >= 0, got {}", self.delta));
        }
        if self.max_evals == 0 {
            return arg_err("max_evals must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Plateau,
    Budget,
    SingleBurst,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinetuneSummary {
    pub evaluations: usize,
    pub initial_accuracy: f64,
    pub best_accuracy: f64,
    pub exit: ExitReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    SplitFirst,
    MergeFirst,
}

impl std::str::FromStr for Order {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split_first" => Ok(Order::SplitFirst),
            "merge_first" => Ok(Order::MergeFirst),
            other => arg_err(format!("unknown order '{other}' (split_first, merge_first)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcckSchedule {
    /// Outer-loop improvement threshold (`delta0`).
    pub delta0: f64,
    /// Split-loop improvement threshold (`delta1`).
    pub delta1: f64,
    /// Every fine-tune, including `delta2` and `M`.
    pub finetune: FinetuneConfig,
    pub split: SplitConfig,
    /// `merge.k` is the absolute kernel count kept in every target layer.
    pub merge: MergeConfig,
    pub target_layers: Vec<usize>,
    pub order: Order,
    pub max_outer_rounds: usize,
    pub max_split_rounds: usize,
    /// Consecutive non-improving rounds tolerated by the split and outer loops.
    pub round_patience: usize,
    /// A split is skipped when it would push a layer above this many kernels.
    pub max_kernels: usize,
}

impl DcckSchedule {
    fn validate(&self) -> Result<()> {
        self.finetune.validate()?;
        for (name, d) in [("delta0", self.delta0), ("delta1", self.delta1)] {
            if !(d >= 0.0) {
                return arg_err(format!("{name} must be >= 0, got {d}"));
            }
        }
        if self.target_layers.is_empty() {
            return arg_err("schedule has no target layers");
        }
        if self.round_patience == 0 {
            return arg_err("round_patience must be at least 1");
        }
        Ok(())
    }
}

/// Resumable optimizer and iterator position.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub step: u64,
    pub epoch: u64,
    pub cursor: usize,
    pub lr: f32,
    pub velocity: Vec<Option<ParamGrads>>,
}

/// Everything a run produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<MetricsRecord>,
    pub events: Vec<StructuralEvent>,
}

pub struct Trainer<'a> {
    data: &'a DataSplits,
    config: TrainerConfig,
    batches: BatchIterator,
    sgd: Sgd,
    step: u64,
    outer_round: usize,
    surgeries: u64,
    history: History,
    sink: Option<MetricsSink>,
}

fn derive_seed(seed: u64, event: u64) -> u64 {
    seed ^ event.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn kernel_summary(model: &Network) -> String {
    let counts: Vec<String> = model
        .layers()
        .iter()
        .filter_map(|l| l.as_conv())
        .map(|p| p.out_channels().to_string())
        .collect();
    counts.join("/")
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a DataSplits, config: TrainerConfig) -> Result<Self> {
        if data.train.is_empty() || data.validation.is_empty() {
            return arg_err("training and validation sets must be non-empty");
        }
        if config.batch_size == 0 {
            return arg_err("batch size must be at least 1");
        }
        Ok(Self {
            data,
            config,
            batches: BatchIterator::new(data.train.len(), config.batch_size, config.shuffle_seed),
            sgd: Sgd::new(config.sgd),
            step: 0,
            outer_round: 0,
            surgeries: 0,
            history: History::default(),
            sink: None,
        })
    }

    /// Streams every record and event to disk as it is produced.
    pub fn with_sink(mut self, sink: MetricsSink) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn into_history(self) -> History {
        self.history
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            step: self.step,
            epoch: self.batches.epoch(),
            cursor: self.batches.cursor(),
            lr: self.sgd.config.lr,
            velocity: self.sgd.velocity().to_vec(),
        }
    }

    pub fn restore_state(&mut self, state: TrainerState) {
        self.step = state.step;
        self.batches = BatchIterator::resume(
            self.data.train.len(),
            self.config.batch_size,
            self.config.shuffle_seed,
            state.epoch,
            state.cursor,
        );
        self.sgd.config.lr = state.lr;
        self.sgd.set_velocity(state.velocity);
    }

    /// One SGD update on the next minibatch; returns its loss.
    pub fn train_step(&mut self, model: &mut Network) -> Result<f64> {
        let indices = self.batches.next_batch();
        let (x, labels) = self.data.train.batch(&indices)?;
        let (loss, grads): (f64, Gradients) = model.loss_and_grads(&x, &labels)?;
        self.sgd.step(model, &grads)?;
        self.step += 1;
        Ok(loss)
    }

    fn record(
        &mut self,
        model: &Network,
        phase: &str,
        event: &str,
        train_loss: Option<f64>,
        val: EvalResult,
    ) -> Result<()> {
        let test_error = match (&self.data.test, self.config.track_test) {
            (Some(test), true) => Some(evaluate(model, test)?.error_percent()),
            _ => None,
        };
        let record = MetricsRecord {
            step: self.step,
            epoch: self.batches.progress(),
            phase: phase.to_string(),
            event: event.to_string(),
            lr: self.sgd.config.lr,
            train_loss,
            val_accuracy: val.accuracy,
            val_loss: val.mean_loss,
            test_error,
            param_count: model.param_count(),
            kernels: kernel_summary(model),
        };
        if let Some(sink) = &mut self.sink {
            sink.record(&record)?;
        }
        self.history.records.push(record);
        Ok(())
    }

    fn log_event(&mut self, report: SurgeryReport, val_accuracy_before: f64) -> Result<()> {
        let event = StructuralEvent { step: self.step, outer_round: self.outer_round, val_accuracy_before, report };
        log::info!(
            "{:?} layer {}: {} -> {} kernels, {} -> {} params",
            event.report.kind,
            event.report.layer,
            event.report.kernels_before,
            event.report.kernels_after,
            event.report.params_before,
            event.report.params_after
        );
        if let Some(sink) = &mut self.sink {
            sink.event(&event)?;
        }
        self.history.events.push(event);
        Ok(())
    }

    /// Runs SGD bursts until validation accuracy stops improving, then
    /// restores the most accurate model seen, including the starting one.
    pub fn finetune(&mut self, model: &mut Network, cfg: &FinetuneConfig, phase: &str) -> Result<FinetuneSummary> {
        self.finetune_from(model, cfg, phase, "start")
    }

    fn finetune_from(
        &mut self,
        model: &mut Network,
        cfg: &FinetuneConfig,
        phase: &str,
        start_event: &str,
    ) -> Result<FinetuneSummary> {
        cfg.validate()?;
        let base_lr = self.sgd.config.lr;
        let initial = evaluate(model, &self.data.validation)?;
        self.record(model, phase, start_event, None, initial)?;
        let mut best = initial.accuracy;
        let mut best_model = model.clone();
        let mut failures = 0;
        let mut drops_left = cfg.lr_drops;
        let mut evaluations = 0;
        let exit = loop {
            let mut loss_sum = 0.0;
            let mut best_is_current = false;
            for _ in 0..cfg.minibatches_per_eval {
                loss_sum += self.train_step(model)?;
            }
            evaluations += 1;
            let val = evaluate(model, &self.data.validation)?;
            let improved = val.accuracy - best > cfg.delta;
            if val.accuracy > best {
                best = val.accuracy;
                best_model = model.clone();
                best_is_current = true;
            }
            let mut event = if improved { "improved" } else { "stalled" };
            if improved {
                failures = 0;
            } else {
                failures += 1;
            }
            let mut exit = None;
            if cfg.delta == f64::INFINITY {
                exit = Some(ExitReason::SingleBurst);
            } else if cfg.patience > 0 && failures >= cfg.patience {
                if drops_left > 0 {
                    drops_left -= 1;
                    failures = 0;
                    self.sgd.config.lr *= 0.1;
                    event = "lr_drop";
                } else {
                    exit = Some(ExitReason::Plateau);
                }
            }
            if exit.is_none() && evaluations >= cfg.max_evals {
                exit = Some(ExitReason::Budget);
            }
            if let Some(reason) = exit {
                event = match reason {
                    ExitReason::Plateau => "plateau_exit",
                    ExitReason::Budget => "budget_exit",
                    ExitReason::SingleBurst => "single_burst_exit",
                };
            }
            let train_loss = loss_sum / cfg.minibatches_per_eval as f64;
            self.record(model, phase, event, Some(train_loss), val)?;
            if let Some(reason) = exit {
                break (reason, best_is_current);
            }
        };
        let (exit, best_is_current) = exit;
        if !best_is_current {
            *model = best_model;
            self.sgd.reset();
        }
        self.sgd.config.lr = base_lr;
        Ok(FinetuneSummary { evaluations, initial_accuracy: initial.accuracy, best_accuracy: best, exit })
    }

    fn surgery_context(&self, phase: &str, layer: usize, err: Error) -> Error {
        Error::Surgery { layer, message: format!("outer round {}, {phase}: {err}", self.outer_round) }
    }

    fn split_targets(&mut self, model: &mut Network, schedule: &DcckSchedule) -> Result<bool> {
        let factor = schedule.split.growth_factor();
        for &layer in &schedule.target_layers {
            let n = model.layers().get(layer).and_then(|l| l.as_conv()).map(|p| p.out_channels());
            if let Some(n) = n {
                if n * factor > schedule.max_kernels {
                    log::info!("layer {layer}: split to {} kernels exceeds cap {}", n * factor, schedule.max_kernels);
                    return Ok(false);
                }
            }
        }
        let before = evaluate(model, &self.data.validation)?.accuracy;
        for &layer in &schedule.target_layers {
            let cfg = SplitConfig { seed: derive_seed(schedule.split.seed, self.surgeries), ..schedule.split };
            self.surgeries += 1;
            let report = split_layer(model, layer, &cfg).map_err(|e| self.surgery_context("split", layer, e))?;
            self.log_event(report, before)?;
        }
        self.sgd.reset();
        Ok(true)
    }

    fn merge_targets(&mut self, model: &mut Network, schedule: &DcckSchedule) -> Result<()> {
        let before = evaluate(model, &self.data.validation)?.accuracy;
        for &layer in &schedule.target_layers {
            let cfg = MergeConfig { seed: derive_seed(schedule.merge.seed, self.surgeries), ..schedule.merge };
            self.surgeries += 1;
            let report = merge_layer(model, layer, &cfg).map_err(|e| self.surgery_context("merge", layer, e))?;
            self.log_event(report, before)?;
        }
        self.sgd.reset();
        Ok(())
    }

    /// Split and fine-tune repeatedly while validation accuracy improves by
    /// more than `delta1`, then restore the most accurate model of the loop.
    fn split_phase(&mut self, model: &mut Network, schedule: &DcckSchedule) -> Result<()> {
        let mut best = evaluate(model, &self.data.validation)?.accuracy;
        let mut best_model = model.clone();
        let mut best_is_current = true;
        let mut failures = 0;
        for _ in 0..schedule.max_split_rounds {
            if !self.split_targets(model, schedule)? {
                break;
            }
            let acc = self.finetune_from(model, &schedule.finetune, "split_finetune", "split")?.best_accuracy;
            if acc - best > schedule.delta1 {
                failures = 0;
            } else {
                failures += 1;
            }
            best_is_current = acc > best;
            if best_is_current {
                best = acc;
                best_model = model.clone();
            }
            if failures >= schedule.round_patience {
                break;
            }
        }
        if !best_is_current {
            log::info!("split loop: restoring the best model ({} params)", best_model.param_count());
            *model = best_model;
            self.sgd.reset();
        }
        Ok(())
    }

    fn merge_phase(&mut self, model: &mut Network, schedule: &DcckSchedule) -> Result<()> {
        self.merge_targets(model, schedule)?;
        self.finetune_from(model, &schedule.finetune, "merge_finetune", "merge")?;
        Ok(())
    }

    /// The full schedule: rounds of (split loop, merge + fine-tune), or the
    /// reverse for [`Order::MergeFirst`], while a round improves validation
    /// accuracy by more than `delta0`.
    pub fn dcck(&mut self, model: &mut Network, schedule: &DcckSchedule) -> Result<()> {
        schedule.validate()?;
        if schedule.max_outer_rounds == 0 {
            return Ok(());
        }
        let mut best = evaluate(model, &self.data.validation)?.accuracy;
        let mut failures = 0;
        for round in 0..schedule.max_outer_rounds {
            self.outer_round = round;
            match schedule.order {
                Order::SplitFirst => {
                    self.split_phase(model, schedule)?;
                    self.merge_phase(model, schedule)?;
                }
                Order::MergeFirst => {
                    self.merge_phase(model, schedule)?;
                    self.split_phase(model, schedule)?;
                }
            }
            let acc = evaluate(model, &self.data.validation)?.accuracy;
            if acc - best > schedule.delta0 {
                failures = 0;
            } else {
                failures += 1;
            }
            best = best.max(acc);
            if failures >= schedule.round_patience {
                break;
            }
        }
        Ok(())
    }
}

/// Fine-tunes `model` in place and returns the metrics history.
pub fn finetune(
    model: &mut Network,
    data: &DataSplits,
    trainer: TrainerConfig,
    cfg: &FinetuneConfig,
) -> Result<Vec<MetricsRecord>> {
    let mut t = Trainer::new(data, trainer)?;
    t.finetune(model, cfg, "finetune")?;
    Ok(t.into_history().records)
}

/// Runs the whole split/merge schedule on `model` in place.
pub fn dcck_run(
    model: &mut Network,
    data: &DataSplits,
    trainer: TrainerConfig,
    schedule: &DcckSchedule,
) -> Result<History> {
    let mut t = Trainer::new(data, trainer)?;
    t.dcck(model, schedule)?;
    Ok(t.into_history())
}
