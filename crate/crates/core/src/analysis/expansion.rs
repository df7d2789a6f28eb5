use super::trace::TraceRecord;
use crate::cells::GateSnapshot;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `ε_t = h_t - h_{t-1}` for `t = 1..=T`; `ε_0 = 0` is implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSeries {
    pub residuals: Vec<Matrix<f64>>,
}

impl ResidualSeries {
    pub fn from_trace(trace: &TraceRecord) -> Self {
        let residuals = trace
            .states()
            .windows(2)
            .map(|w| zip_with(&w[1], &w[0], |a, b| a - b))
            .collect();
        ResidualSeries { residuals }
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// `Σ_{t=1}^{T} ε_t`, which telescopes to `h_T - h_0`.
    pub fn total(&self) -> Option<Matrix<f64>> {
        let mut it = self.residuals.iter();
        let mut acc = it.next()?.clone();
        for e in it {
            acc = zip_with(&acc, e, |a, b| a + b);
        }
        Some(acc)
    }
}

/// `λ_t` for `t = 1..=T` and their sum `λ`, with `h_T = h_0 + λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaDecomposition {
    pub terms: Vec<Matrix<f64>>,
    pub total: Matrix<f64>,
}

impl LambdaDecomposition {
    /// `h_0 + λ`.
    pub fn reconstruct(&self, h0: &Matrix<f64>) -> Matrix<f64> {
        zip_with(h0, &self.total, |a, b| a + b)
    }
}

pub(crate) fn zip_with(a: &Matrix<f64>, b: &Matrix<f64>, f: impl Fn(f64, f64) -> f64) -> Matrix<f64> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).unwrap()
}

fn gates_of(trace: &TraceRecord) -> Result<&[GateSnapshot<f64>]> {
    trace
        .gates()
        .ok_or_else(|| Error::State("trace carries no gate history".into()))
}

/// `Q_t = ∏_{j=t}^{T+1} C_j` for `t = 1..=T+1`, with `C_{T+1} = 1`;
/// index `t - 1`.
fn carry_suffix_products(gates: &[GateSnapshot<f64>], shape: (usize, usize)) -> Vec<Matrix<f64>> {
    let mut q = vec![Matrix::ones(shape.0, shape.1)];
    for g in gates.iter().rev() {
        let next = zip_with(&g.carry_gate, q.last().unwrap(), |c, p| c * p);
        q.push(next);
    }
    q.reverse();
    q
}

/// Closed form of the dual-gate recursion:
/// `h_T = h_0 ⊙ ∏_{t=1}^{T} C_t + Σ_{t=1}^{T} H_t ⊙ T_t ⊙ ∏_{i=t+1}^{T+1} C_i`.
pub fn expand_gated(trace: &TraceRecord, h0: &Matrix<f64>) -> Result<Matrix<f64>> {
    let gates = gates_of(trace)?;
    h0.check_same_shape(trace.initial(), "expand_gated")?;
    let q = carry_suffix_products(gates, h0.shape());
    let mut acc = zip_with(h0, &q[0], |h, p| h * p);
    for (t, g) in gates.iter().enumerate() {
        let ht = zip_with(&g.transform, &g.transform_gate, |h, tg| h * tg);
        let term = zip_with(&ht, &q[t + 1], |a, p| a * p);
        acc = zip_with(&acc, &term, |a, b| a + b);
    }
    Ok(acc)
}

/// `λ_t = (Σ_{i=1}^{t} ε_i) ⊙ ∏_{j=t+1}^{T+1} C_j - (Σ_{i=0}^{t-1} ε_i) ⊙ ∏_{j=t}^{T} C_j`.
pub fn lambda_decompose(trace: &TraceRecord, residuals: &ResidualSeries) -> Result<LambdaDecomposition> {
    let gates = gates_of(trace)?;
    if residuals.len() != trace.len() {
        return Err(Error::State(format!(
            "{} residuals for a {}-step trace",
            residuals.len(),
            trace.len()
        )));
    }
    let shape = trace.initial().shape();
    for (t, (e, w)) in residuals.residuals.iter().zip(trace.states().windows(2)).enumerate() {
        if e.shape() != shape {
            return Err(Error::State(format!("residual {} has shape {:?}", t + 1, e.shape())));
        }
        let scale = w[1].max_abs_diff(&Matrix::zeros(shape.0, shape.1)).max(1.0);
        let drift = e.as_slice().iter().zip(w[1].as_slice().iter().zip(w[0].as_slice()));
        if drift.map(|(e, (a, b))| (e - (a - b)).abs()).any(|d| d > 1e-12 * scale) {
            return Err(Error::State(format!("residual {} does not match the trace", t + 1)));
        }
    }
    let q = carry_suffix_products(gates, shape);
    let mut prefix = Matrix::zeros(shape.0, shape.1);
    let mut terms = Vec::with_capacity(gates.len());
    let mut total = Matrix::zeros(shape.0, shape.1);
    for (t, e) in residuals.residuals.iter().enumerate() {
        let before = prefix.clone();
        prefix = zip_with(&prefix, e, |a, b| a + b);
        let lead = zip_with(&prefix, &q[t + 1], |a, p| a * p);
        let lag = zip_with(&before, &q[t], |a, p| a * p);
        let term = zip_with(&lead, &lag, |a, b| a - b);
        total = zip_with(&total, &term, |a, b| a + b);
        terms.push(term);
    }
    Ok(LambdaDecomposition { terms, total })
}

/// With the carry gate closed on `[1, T]`: `h_T = h_0 + Σ_t ε_t`.
pub fn carry_closed_state(h0: &Matrix<f64>, residuals: &ResidualSeries) -> Result<Matrix<f64>> {
    let total = residuals
        .total()
        .ok_or_else(|| Error::State("no residuals".into()))?;
    h0.check_same_shape(&total, "carry_closed_state")?;
    Ok(zip_with(h0, &total, |a, b| a + b))
}

/// With the carry gate closed and `h_0 = 0`: `h_T = h_1 + Σ_{t=2}^{T} ε_t`.
pub fn carry_closed_from_first(trace: &TraceRecord, residuals: &ResidualSeries) -> Result<Matrix<f64>> {
    if trace.is_empty() || residuals.len() != trace.len() {
        return Err(Error::State("trace and residuals disagree".into()));
    }
    let mut acc = trace.states()[1].clone();
    for e in &residuals.residuals[1..] {
        acc = zip_with(&acc, e, |a, b| a + b);
    }
    Ok(acc)
}
