use super::trace::TraceRecord;
use crate::error::{Error, Result};
use crate::numerics::{mean, variance, Matrix};

/// Per-step mean and variance of a state difference, pooled over batch and
/// units. Index `t - 1` holds step `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AeeSeries {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl AeeSeries {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn push(&mut self, diff: &Matrix<f64>) -> Result<()> {
        self.mean.push(mean(diff)?);
        self.variance.push(variance(diff)?);
        Ok(())
    }
}

fn difference(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("trace states share a shape")
}

fn nonempty(trace: &TraceRecord) -> Result<()> {
    if trace.is_empty() || trace.initial().is_empty() {
        return Err(Error::State("trace has no steps".into()));
    }
    Ok(())
}

/// `h_t - h_T` for `t = 1..=T`.
pub fn aee_vs_final(trace: &TraceRecord) -> Result<AeeSeries> {
    nonempty(trace)?;
    let last = trace.last();
    let mut out = AeeSeries::default();
    for h in &trace.states()[1..] {
        out.push(&difference(h, last))?;
    }
    Ok(out)
}

/// `h_t - h_{t-1}` for `t = 1..=T`.
pub fn aee_step(trace: &TraceRecord) -> Result<AeeSeries> {
    nonempty(trace)?;
    let mut out = AeeSeries::default();
    for w in trace.states().windows(2) {
        out.push(&difference(&w[1], &w[0]))?;
    }
    Ok(out)
}
