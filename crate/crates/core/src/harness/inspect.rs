use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    aee_reports, expand_gated, lambda_decompose, record_traces, AeeReport, ResidualSeries, TraceOptions, TraceSignal,
};
use crate::error::{Error, Result};
use crate::numerics::{write_matrix, Matrix};
use crate::tasks::save_adding;

use super::checkpoint::load_checkpoint;
use super::config::ExperimentConfig;
use super::data::{load_task, permutation_for, pixel_splits};
use super::metrics::read_metrics_csv;
use super::run::{METRICS_FILE, STATUS_FILE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalyzeOptions {
    /// Leading test sequences to trace.
    pub samples: usize,
    pub layer: Option<usize>,
    pub signal: TraceSignal,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            samples: 256,
            layer: None,
            signal: TraceSignal::Output,
        }
    }
}

/// AEE series of a trained model plus the identity residuals measured on the
/// same trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub reports: [AeeReport; 2],
    /// `|aee_vs_final|` at `t = T`.
    pub final_step_error: f64,
    /// `|Σ_t aee_step - mean(h_T - h_0)|`.
    pub telescoping_error: f64,
    /// Worst entry of the closed-form expansion and of `h_0 + λ` against
    /// `h_T`, when the trace has gates.
    pub expansion_error: Option<(f64, f64)>,
}

pub fn analyze_checkpoint(cfg: &ExperimentConfig, checkpoint: &Path, opts: &AnalyzeOptions) -> Result<Analysis> {
    if opts.samples == 0 {
        return Err(Error::Config("analysis needs at least one sample".into()));
    }
    let net = load_checkpoint::<f64>(checkpoint)?.network;
    let data = load_task::<f64>(cfg)?;
    let n = opts.samples.min(data.test.batch_size());
    let batch = data.test.select(&(0..n).collect::<Vec<_>>())?;
    let trace = record_traces(
        &net,
        &batch,
        &TraceOptions {
            layer: opts.layer,
            signal: opts.signal,
            ..TraceOptions::default()
        },
    )?;
    let reports = aee_reports(net.arch().name(), &trace)?;
    let final_step_error = reports[0].series.mean.last().map_or(f64::INFINITY, |v| v.abs());
    let drift = trace.last().as_slice().iter().zip(trace.initial().as_slice()).map(|(a, b)| a - b);
    let target = drift.sum::<f64>() / trace.last().len() as f64;
    let telescoping_error = (reports[1].series.mean.iter().sum::<f64>() - target).abs();
    let expansion_error = match trace.gates() {
        None => None,
        Some(_) => {
            let closed = expand_gated(&trace, trace.initial())?.max_abs_diff(trace.last());
            let lambda = lambda_decompose(&trace, &ResidualSeries::from_trace(&trace))?;
            Some((closed, lambda.reconstruct(trace.initial()).max_abs_diff(trace.last())))
        }
    };
    Ok(Analysis {
        reports,
        final_step_error,
        telescoping_error,
        expansion_error,
    })
}

/// Writes a task's datasets into `dir`: the adding cache, or the pixel
/// splits as `N x T` matrices with a label column and the permutation.
pub fn materialize(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    if let Some(spec) = cfg.adding_spec() {
        let data = load_task::<f64>(cfg)?;
        save_adding(dir, &spec, &data.train, &data.test)?;
        return Ok(["adding.json", "train.bin", "test.bin"].iter().map(|f| dir.join(f)).collect());
    }
    let (train, test) = pixel_splits(cfg)?;
    let permutation = permutation_for(cfg, train.rows);
    let mut written = Vec::new();
    for (name, set) in [("pixels_train.bin", &train), ("pixels_test.bin", &test)] {
        let order: Vec<usize> = match &permutation {
            Some(p) => p.indices().to_vec(),
            None => (0..set.rows * set.cols).collect(),
        };
        let pixels = Matrix::from_fn(set.len(), order.len(), |i, k| set.pixels.get(i, order[k]));
        let labels = Matrix::from_fn(set.len(), 1, |i, _| set.labels[i] as f64);
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        write_matrix(&mut w, &pixels)?;
        write_matrix(&mut w, &labels)?;
        w.flush()?;
        written.push(path);
    }
    if let Some(p) = &permutation {
        let path = dir.join("permutation.json");
        let json = serde_json::to_string(p).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, json + "\n")?;
        written.push(path);
    }
    Ok(written)
}

/// One `(run, split, metric)` line of a report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub status: String,
    pub split: String,
    pub metric: String,
    pub points: usize,
    pub last_epoch: usize,
    pub last: f64,
    pub best_epoch: usize,
    pub best: f64,
}

fn higher_is_better(metric: &str) -> bool {
    metric == "accuracy"
}

/// Final and best value of every metric in each run directory. Best means
/// the maximum for accuracy and the minimum otherwise.
pub fn summarize_runs(dirs: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for dir in dirs {
        let metrics = read_metrics_csv(File::open(dir.join(METRICS_FILE))?)?;
        let status = std::fs::read_to_string(dir.join(STATUS_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v.get("status").and_then(|s| s.as_str()).map(str::to_string))
            .unwrap_or_else(|| "unknown".into());
        let mut keys: BTreeMap<(String, String), ()> = BTreeMap::new();
        for r in &metrics.rows {
            keys.insert((r.split.clone(), r.metric.clone()), ());
        }
        for (split, metric) in keys.into_keys() {
            let series = metrics.series(&split, &metric);
            let &(last_epoch, last) = series.last().expect("key came from a row");
            let better = |a: f64, b: f64| if higher_is_better(&metric) { a > b } else { a < b };
            let (best_epoch, best) = series
                .iter()
                .copied()
                .fold(series[0], |acc, p| if better(p.1, acc.1) { p } else { acc });
            out.push(SummaryRow {
                run: dir.display().to_string(),
                status: status.clone(),
                split,
                metric,
                points: series.len(),
                last_epoch,
                last,
                best_epoch,
                best,
            });
        }
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    if rows.is_empty() {
        w.write_record(["run", "status", "split", "metric", "points", "last_epoch", "last", "best_epoch", "best"])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
