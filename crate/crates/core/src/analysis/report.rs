use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::aee::AeeSeries;
use crate::error::{Error, Result};

pub const AEE_HEADER: [&str; 5] = ["arch", "step", "metric", "mean", "variance"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeeMetric {
    /// `h_t - h_T`.
    AeeFinal,
    /// `h_t - h_{t-1}`.
    AeeStep,
}

/// One labelled series in a report.
#[derive(Clone, Debug, PartialEq)]
pub struct AeeReport {
    pub arch: String,
    pub metric: AeeMetric,
    pub series: AeeSeries,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Row {
    arch: String,
    step: usize,
    metric: AeeMetric,
    mean: f64,
    variance: f64,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

/// Writes `arch,step,metric,mean,variance`, one row per step (steps count
/// from 1). An empty report is header-only.
pub fn write_aee_csv<W: Write>(out: W, reports: &[AeeReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(AEE_HEADER).map_err(csv_err)?;
    for r in reports {
        for (i, (&mean, &variance)) in r.series.mean.iter().zip(&r.series.variance).enumerate() {
            w.serialize(Row {
                arch: r.arch.clone(),
                step: i + 1,
                metric: r.metric,
                mean,
                variance,
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a report back into series, in order of first appearance.
pub fn read_aee_csv<R: Read>(input: R) -> Result<Vec<AeeReport>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(AEE_HEADER) {
        return Err(Error::Format(format!("unexpected AEE header {headers:?}")));
    }
    let mut reports: Vec<AeeReport> = Vec::new();
    for row in rd.deserialize::<Row>() {
        let row = row.map_err(csv_err)?;
        let idx = match reports.iter().position(|r| r.arch == row.arch && r.metric == row.metric) {
            Some(i) => i,
            None => {
                reports.push(AeeReport {
                    arch: row.arch.clone(),
                    metric: row.metric,
                    series: AeeSeries::default(),
                });
                reports.len() - 1
            }
        };
        let series = &mut reports[idx].series;
        if row.step != series.len() + 1 {
            return Err(Error::Format(format!(
                "{} {:?}: step {} follows step {}",
                row.arch,
                row.metric,
                row.step,
                series.len()
            )));
        }
        series.mean.push(row.mean);
        series.variance.push(row.variance);
    }
    Ok(reports)
}
