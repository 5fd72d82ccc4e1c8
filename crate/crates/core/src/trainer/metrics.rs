//! Training records and their on-disk forms.
//!
//! `metrics.csv` columns, in order: `step, epoch, phase, event, lr,
//! train_loss, val_accuracy, val_loss, test_error, param_count, kernels`.
//! `event` is empty for ordinary evaluations, otherwise one of `start`,
//! `improved`, `stalled`, `lr_drop`, `plateau_exit`, `budget_exit`,
//! `single_burst_exit` or a structural marker `split`/`merge`.
//! `kernels` lists conv kernel counts joined by `/`. `test_error` is a
//! percentage and empty when no test set is attached.
//!
//! `events.jsonl` holds one [`StructuralEvent`] object per line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::surgery::SurgeryReport;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub epoch: f64,
    pub phase: String,
    pub event: String,
    pub lr: f32,
    /// Mean minibatch loss since the previous record.
    pub train_loss: Option<f64>,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub test_error: Option<f64>,
    pub param_count: usize,
    pub kernels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralEvent {
    pub step: u64,
    pub outer_round: usize,
    pub val_accuracy_before: f64,
    #[serde(flatten)]
    pub report: SurgeryReport,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Appends records to `metrics.csv` and `events.jsonl` as they are produced.
pub struct MetricsSink {
    metrics: csv::Writer<File>,
    events: BufWriter<File>,
}

impl MetricsSink {
    pub fn create(metrics_path: &Path, events_path: &Path) -> Result<Self> {
        Ok(Self {
            metrics: csv::Writer::from_path(metrics_path).map_err(csv_err)?,
            events: BufWriter::new(File::create(events_path)?),
        })
    }

    pub fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        self.metrics.serialize(record).map_err(csv_err)?;
        self.metrics.flush()?;
        Ok(())
    }

    pub fn event(&mut self, event: &StructuralEvent) -> Result<()> {
        let line = serde_json::to_string(event).map_err(|e| Error::Format(format!("json: {e}")))?;
        writeln!(self.events, "{line}")?;
        self.events.flush()?;
        Ok(())
    }
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
