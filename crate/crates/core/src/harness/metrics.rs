use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,split,metric,value";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Every row written by a run, in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<MetricRow>,
}

impl RunMetrics {
    /// `(epoch, value)` pairs for one split and metric.
    pub fn series(&self, split: &str, metric: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| (r.epoch, r.value))
            .collect()
    }

    pub fn last(&self, split: &str, metric: &str) -> Option<f64> {
        self.series(split, metric).last().map(|&(_, v)| v)
    }

    pub fn last_epoch(&self) -> usize {
        self.rows.iter().map(|r| r.epoch).max().unwrap_or(0)
    }
}

/// Append-only CSV sink; each row goes out in a single write and is flushed
/// before the call returns.
pub struct MetricsWriter {
    file: File,
    rows: RunMetrics,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new().append(true).create_new(true).open(path)?;
        file.write_all(format!("{METRICS_HEADER}\n").as_bytes())?;
        file.flush()?;
        Ok(MetricsWriter {
            file,
            rows: RunMetrics::default(),
        })
    }

    pub fn record(&mut self, epoch: usize, split: &str, metric: &str, value: f64) -> Result<()> {
        if let Some(prev) = self.rows.rows.last() {
            if epoch < prev.epoch {
                return Err(Error::State(format!("epoch {epoch} recorded after {}", prev.epoch)));
            }
        }
        self.file
            .write_all(format!("{epoch},{split},{metric},{value}\n").as_bytes())?;
        self.file.flush()?;
        self.rows.rows.push(MetricRow {
            epoch,
            split: split.into(),
            metric: metric.into(),
            value,
        });
        Ok(())
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.rows
    }

    pub fn into_metrics(self) -> RunMetrics {
        self.rows
    }
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<RunMetrics> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if headers.iter().ne(METRICS_HEADER.split(',')) {
        return Err(Error::Format(format!("unexpected metrics header {headers:?}")));
    }
    let rows = rd
        .deserialize()
        .collect::<std::result::Result<Vec<MetricRow>, _>>()
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(RunMetrics { rows })
}
