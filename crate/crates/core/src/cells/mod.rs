//! Single-step forward and backward kernels for every recurrent cell.
//!
//! All cells use the batch-rows convention: `x_t` is `B x D`, states are
//! `B x H`, and pre-activations are `x W + h U + b`.

mod affine;
mod deep;
mod gated;
mod lstm;
mod plain;

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use affine::PlainCellParams;
pub use deep::DeepTransitionParams;
pub use gated::{GateOverride, GateSnapshot, GatedCellParams, GatedLayer};
pub use lstm::LstmCellParams;

use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Rin,
    Irnn,
    Lstm,
    Gated,
    RinDt,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Rin, Arch::Irnn, Arch::Lstm, Arch::Gated, Arch::RinDt];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Rin => "rin",
            Arch::Irnn => "irnn",
            Arch::Lstm => "lstm",
            Arch::Gated => "gated",
            Arch::RinDt => "rin_dt",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown architecture `{s}`")))
    }
}

fn default_transform_activation() -> Activation {
    Activation::Tanh
}

/// Everything needed to rebuild a cell's parameter layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Activation of the generic gated cell's hidden transform.
    #[serde(default = "default_transform_activation")]
    pub transform_activation: Activation,
}

impl CellConfig {
    pub fn new(arch: Arch, input_dim: usize, hidden_dim: usize) -> Self {
        CellConfig {
            arch,
            input_dim,
            hidden_dim,
            transform_activation: default_transform_activation(),
        }
    }
}

/// Trainable parameters of one recurrent layer, tagged by architecture.
///
/// The same type doubles as the gradient container for that layer.
#[derive(Clone, Debug, PartialEq)]
pub enum CellParams<S> {
    Rin(PlainCellParams<S>),
    Irnn(PlainCellParams<S>),
    Lstm(LstmCellParams<S>),
    Gated(GatedCellParams<S>),
    RinDt(DeepTransitionParams<S>),
}

/// Hidden state after a step; `c` is present iff the cell is an LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState<S> {
    pub h: Matrix<S>,
    pub c: Option<Matrix<S>>,
}

impl<S: Scalar> CellParams<S> {
    pub fn zeros(config: &CellConfig) -> Self {
        let (d, h) = (config.input_dim, config.hidden_dim);
        match config.arch {
            Arch::Rin => CellParams::Rin(PlainCellParams::zeros(d, h, true)),
            Arch::Irnn => CellParams::Irnn(PlainCellParams::zeros(d, h, false)),
            Arch::Lstm => CellParams::Lstm(LstmCellParams::zeros(d, h)),
            Arch::Gated => {
                CellParams::Gated(GatedCellParams::zeros(d, h, config.transform_activation))
            }
            Arch::RinDt => CellParams::RinDt(DeepTransitionParams::zeros(d, h)),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            CellParams::Rin(_) => Arch::Rin,
            CellParams::Irnn(_) => Arch::Irnn,
            CellParams::Lstm(_) => Arch::Lstm,
            CellParams::Gated(_) => Arch::Gated,
            CellParams::RinDt(_) => Arch::RinDt,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Rin(p) | CellParams::Irnn(p) => p.input_dim(),
            CellParams::Lstm(p) => p.input_dim(),
            CellParams::Gated(p) => p.input_dim(),
            CellParams::RinDt(p) => p.input_dim(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            CellParams::Rin(p) | CellParams::Irnn(p) => p.hidden_dim(),
            CellParams::Lstm(p) => p.hidden_dim(),
            CellParams::Gated(p) => p.hidden_dim(),
            CellParams::RinDt(p) => p.hidden_dim(),
        }
    }

    pub fn config(&self) -> CellConfig {
        let mut cfg = CellConfig::new(self.arch(), self.input_dim(), self.hidden_dim());
        if let CellParams::Gated(p) = self {
            cfg.transform_activation = p.transform.activation;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CellParams::Rin(p) | CellParams::Irnn(p) => {
                p.validate()?;
                let want = matches!(self, CellParams::Rin(_));
                if p.identity_surrogate != want {
                    return Err(Error::Config(format!(
                        "{} requires identity_surrogate = {want}",
                        self.arch()
                    )));
                }
                Ok(())
            }
            CellParams::Lstm(p) => p.validate(),
            CellParams::Gated(p) => p.validate(),
            CellParams::RinDt(p) => p.validate(),
        }
    }

    /// Trainable blocks in a fixed order. The identity surrogate is not a
    /// block.
    pub fn blocks(&self) -> Vec<(&'static str, &Matrix<S>)> {
        match self {
            CellParams::Rin(p) | CellParams::Irnn(p) => vec![("W", &p.w), ("U", &p.u), ("b", &p.b)],
            CellParams::Lstm(p) => vec![
                ("W_i", &p.input.w),
                ("U_i", &p.input.u),
                ("b_i", &p.input.b),
                ("W_f", &p.forget.w),
                ("U_f", &p.forget.u),
                ("b_f", &p.forget.b),
                ("W_c", &p.candidate.w),
                ("U_c", &p.candidate.u),
                ("b_c", &p.candidate.b),
                ("W_o", &p.output.w),
                ("U_o", &p.output.u),
                ("b_o", &p.output.b),
            ],
            CellParams::Gated(p) => vec![
                ("transform.W", &p.transform.params.w),
                ("transform.U", &p.transform.params.u),
                ("transform.b", &p.transform.params.b),
                ("transform_gate.W", &p.transform_gate.params.w),
                ("transform_gate.U", &p.transform_gate.params.u),
                ("transform_gate.b", &p.transform_gate.params.b),
                ("carry_gate.W", &p.carry_gate.params.w),
                ("carry_gate.U", &p.carry_gate.params.u),
                ("carry_gate.b", &p.carry_gate.params.b),
            ],
            CellParams::RinDt(p) => vec![
                ("W1", &p.stage1.w),
                ("U1", &p.stage1.u),
                ("b1", &p.stage1.b),
                ("U2", &p.u2),
                ("b2", &p.b2),
            ],
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix<S>)> {
        match self {
            CellParams::Rin(p) | CellParams::Irnn(p) => {
                vec![("W", &mut p.w), ("U", &mut p.u), ("b", &mut p.b)]
            }
            CellParams::Lstm(p) => vec![
                ("W_i", &mut p.input.w),
                ("U_i", &mut p.input.u),
                ("b_i", &mut p.input.b),
                ("W_f", &mut p.forget.w),
                ("U_f", &mut p.forget.u),
                ("b_f", &mut p.forget.b),
                ("W_c", &mut p.candidate.w),
                ("U_c", &mut p.candidate.u),
                ("b_c", &mut p.candidate.b),
                ("W_o", &mut p.output.w),
                ("U_o", &mut p.output.u),
                ("b_o", &mut p.output.b),
            ],
            CellParams::Gated(p) => vec![
                ("transform.W", &mut p.transform.params.w),
                ("transform.U", &mut p.transform.params.u),
                ("transform.b", &mut p.transform.params.b),
                ("transform_gate.W", &mut p.transform_gate.params.w),
                ("transform_gate.U", &mut p.transform_gate.params.u),
                ("transform_gate.b", &mut p.transform_gate.params.b),
                ("carry_gate.W", &mut p.carry_gate.params.w),
                ("carry_gate.U", &mut p.carry_gate.params.u),
                ("carry_gate.b", &mut p.carry_gate.params.b),
            ],
            CellParams::RinDt(p) => vec![
                ("W1", &mut p.stage1.w),
                ("U1", &mut p.stage1.u),
                ("b1", &mut p.stage1.b),
                ("U2", &mut p.u2),
                ("b2", &mut p.b2),
            ],
        }
    }

    /// Same layout, every block zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, m) in z.blocks_mut() {
            m.fill(S::zero());
        }
        z
    }

    pub fn initial_state(&self, batch: usize) -> CellState<S> {
        let h = Matrix::zeros(batch, self.hidden_dim());
        let c = matches!(self, CellParams::Lstm(_)).then(|| h.clone());
        CellState { h, c }
    }

    /// Materializes the effective hidden-to-hidden matrices (`U + I` where
    /// the surrogate applies) once, for reuse across many steps.
    pub fn prepare(&self) -> PreparedCell<'_, S> {
        let recurrent = match self {
            CellParams::Rin(p) | CellParams::Irnn(p) => vec![p.effective_recurrent()],
            CellParams::Lstm(_) => Vec::new(),
            CellParams::Gated(p) => p
                .layers()
                .iter()
                .map(|l| l.params.effective_recurrent())
                .collect(),
            CellParams::RinDt(p) => vec![
                p.stage1.effective_recurrent(),
                Cow::Owned(p.stage2_effective()),
            ],
        };
        PreparedCell {
            params: self,
            recurrent,
        }
    }
}

/// A cell with its effective recurrent matrices precomputed.
pub struct PreparedCell<'a, S: Clone> {
    params: &'a CellParams<S>,
    recurrent: Vec<Cow<'a, Matrix<S>>>,
}

/// Forward intermediates of one step, consumed by [`cell_backward`].
pub struct StepCache<S>(CacheKind<S>);

enum CacheKind<S> {
    Plain(plain::PlainCache<S>),
    Lstm(lstm::LstmCache<S>),
    Gated(gated::GatedCache<S>),
    Deep(deep::DeepCache<S>),
}

impl<S: Scalar> StepCache<S> {
    fn kind(&self) -> &'static str {
        match &self.0 {
            CacheKind::Plain(_) => "plain",
            CacheKind::Lstm(_) => "lstm",
            CacheKind::Gated(_) => "gated",
            CacheKind::Deep(_) => "deep transition",
        }
    }

    pub fn output(&self) -> &Matrix<S> {
        match &self.0 {
            CacheKind::Plain(c) => &c.h,
            CacheKind::Lstm(c) => &c.h,
            CacheKind::Gated(c) => &c.h,
            CacheKind::Deep(c) => &c.h,
        }
    }

    pub fn memory_cell(&self) -> Option<&Matrix<S>> {
        match &self.0 {
            CacheKind::Lstm(c) => Some(&c.c),
            _ => None,
        }
    }

    /// The step written in dual-gate form. Gated cells report their realized
    /// gates; an LSTM maps to `H = g, T = i, C = f` on its memory cell; plain
    /// and deep-transition cells are the `T = 1, C = 0` subcase with
    /// `H = h_t`.
    pub fn gate_snapshot(&self) -> GateSnapshot<S> {
        match &self.0 {
            CacheKind::Gated(c) => c.gates.clone(),
            CacheKind::Lstm(c) => GateSnapshot {
                transform: c.g.clone(),
                transform_gate: c.i.clone(),
                carry_gate: c.f.clone(),
            },
            CacheKind::Plain(_) | CacheKind::Deep(_) => {
                let h = self.output();
                GateSnapshot {
                    transform: h.clone(),
                    transform_gate: Matrix::ones(h.rows(), h.cols()),
                    carry_gate: Matrix::zeros(h.rows(), h.cols()),
                }
            }
        }
    }

    fn state(&self) -> CellState<S> {
        CellState {
            h: self.output().clone(),
            c: self.memory_cell().cloned(),
        }
    }
}

/// Gradients of one step.
#[derive(Clone, Debug)]
pub struct StepGradients<S> {
    pub params: CellParams<S>,
    pub grad_h_prev: Matrix<S>,
    pub grad_c_prev: Option<Matrix<S>>,
    pub grad_x: Matrix<S>,
}

impl<'a, S: Scalar> PreparedCell<'a, S> {
    pub fn params(&self) -> &'a CellParams<S> {
        self.params
    }

    pub fn forward(&self, x: &Matrix<S>, state: &CellState<S>) -> Result<(CellState<S>, StepCache<S>)> {
        self.forward_forced(x, state, GateOverride::default())
    }

    /// Forward with gates pinned; only dual-gate cells accept a non-empty
    /// override.
    pub fn forward_forced(
        &self,
        x: &Matrix<S>,
        state: &CellState<S>,
        forced: GateOverride<S>,
    ) -> Result<(CellState<S>, StepCache<S>)> {
        if forced != GateOverride::default() && !matches!(self.params, CellParams::Gated(_)) {
            return Err(Error::Config(format!(
                "gate override is not defined for a {} cell",
                self.params.arch()
            )));
        }
        let cache = match self.params {
            CellParams::Rin(p) | CellParams::Irnn(p) => {
                CacheKind::Plain(plain::forward(p, &self.recurrent[0], x, &state.h)?)
            }
            CellParams::Lstm(p) => {
                let c_prev = state
                    .c
                    .as_ref()
                    .ok_or_else(|| Error::State("lstm step needs a memory cell state".into()))?;
                CacheKind::Lstm(lstm::forward(p, x, &state.h, c_prev)?)
            }
            CellParams::Gated(p) => {
                CacheKind::Gated(gated::forward(p, &self.recurrent, x, &state.h, forced)?)
            }
            CellParams::RinDt(p) => CacheKind::Deep(deep::forward(p, &self.recurrent, x, &state.h)?),
        };
        let cache = StepCache(cache);
        Ok((cache.state(), cache))
    }

    /// Backward through one step, accumulating parameter gradients into
    /// `acc`. Returns `(dh_prev, dc_prev, dx)`.
    pub fn backward_into(
        &self,
        cache: &StepCache<S>,
        grad_h: &Matrix<S>,
        grad_c: Option<&Matrix<S>>,
        acc: &mut CellParams<S>,
    ) -> Result<(Matrix<S>, Option<Matrix<S>>, Matrix<S>)> {
        let mismatch = || {
            Error::State(format!(
                "{} cache cannot be back-propagated through a {} cell",
                cache.kind(),
                self.params.arch()
            ))
        };
        if acc.arch() != self.params.arch() {
            return Err(Error::State("gradient accumulator has a different architecture".into()));
        }
        match (self.params, &cache.0, acc) {
            (CellParams::Rin(p), CacheKind::Plain(c), CellParams::Rin(a))
            | (CellParams::Irnn(p), CacheKind::Plain(c), CellParams::Irnn(a)) => {
                let (dh, dx) = plain::backward(p, &self.recurrent[0], c, grad_h, a)?;
                Ok((dh, None, dx))
            }
            (CellParams::Lstm(p), CacheKind::Lstm(c), CellParams::Lstm(a)) => {
                let (dh, dc, dx) = lstm::backward(p, c, grad_h, grad_c, a)?;
                Ok((dh, Some(dc), dx))
            }
            (CellParams::Gated(p), CacheKind::Gated(c), CellParams::Gated(a)) => {
                let (dh, dx) = gated::backward(p, &self.recurrent, c, grad_h, a)?;
                Ok((dh, None, dx))
            }
            (CellParams::RinDt(p), CacheKind::Deep(c), CellParams::RinDt(a)) => {
                let (dh, dx) = deep::backward(p, &self.recurrent, c, grad_h, a)?;
                Ok((dh, None, dx))
            }
            _ => Err(mismatch()),
        }
    }
}

fn require_surrogate<S: Scalar>(p: &PlainCellParams<S>, want: bool, op: &str) -> Result<()> {
    if p.identity_surrogate != want {
        return Err(Error::Config(format!(
            "{op} requires use_identity_surrogate = {want}"
        )));
    }
    Ok(())
}

/// `h = ReLU(x W + h_prev (U + I) + b)` with `I` fixed.
pub fn rin_step<S: Scalar>(params: &PlainCellParams<S>, x: &Matrix<S>, h_prev: &Matrix<S>) -> Result<CellState<S>> {
    require_surrogate(params, true, "rin_step")?;
    params.validate()?;
    let cache = plain::forward(params, &params.effective_recurrent(), x, h_prev)?;
    Ok(CellState { h: cache.h, c: None })
}

/// `h = ReLU(x W + h_prev U + b)`.
pub fn irnn_step<S: Scalar>(params: &PlainCellParams<S>, x: &Matrix<S>, h_prev: &Matrix<S>) -> Result<CellState<S>> {
    require_surrogate(params, false, "irnn_step")?;
    params.validate()?;
    let cache = plain::forward(params, &params.u, x, h_prev)?;
    Ok(CellState { h: cache.h, c: None })
}

pub fn lstm_step<S: Scalar>(params: &LstmCellParams<S>, x: &Matrix<S>, state_prev: &CellState<S>) -> Result<CellState<S>> {
    params.validate()?;
    let c_prev = state_prev
        .c
        .as_ref()
        .ok_or_else(|| Error::State("lstm step needs a memory cell state".into()))?;
    let cache = lstm::forward(params, x, &state_prev.h, c_prev)?;
    Ok(CellState {
        h: cache.h,
        c: Some(cache.c),
    })
}

/// One dual-gate step, returning the new state and the realized gates.
pub fn gated_step<S: Scalar>(
    params: &GatedCellParams<S>,
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
) -> Result<(CellState<S>, GateSnapshot<S>)> {
    gated_step_forced(params, x, h_prev, GateOverride::default())
}

/// [`gated_step`] with gates optionally pinned to constants.
pub fn gated_step_forced<S: Scalar>(
    params: &GatedCellParams<S>,
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
    forced: GateOverride<S>,
) -> Result<(CellState<S>, GateSnapshot<S>)> {
    params.validate()?;
    let recurrent: Vec<_> = params
        .layers()
        .iter()
        .map(|l| l.params.effective_recurrent())
        .collect();
    let cache = gated::forward(params, &recurrent, x, h_prev, forced)?;
    Ok((CellState { h: cache.h, c: None }, cache.gates))
}

pub fn rin_dt_step<S: Scalar>(
    params: &DeepTransitionParams<S>,
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
) -> Result<CellState<S>> {
    params.validate()?;
    let recurrent = [
        params.stage1.effective_recurrent(),
        Cow::Owned(params.stage2_effective()),
    ];
    let cache = deep::forward(params, &recurrent, x, h_prev)?;
    Ok(CellState { h: cache.h, c: None })
}

/// Exact gradients of one step given the upstream `dL/dh` (and `dL/dc` for
/// an LSTM).
pub fn cell_backward<S: Scalar>(
    params: &CellParams<S>,
    cache: &StepCache<S>,
    grad_h: &Matrix<S>,
    grad_c: Option<&Matrix<S>>,
) -> Result<StepGradients<S>> {
    let prepared = params.prepare();
    let mut acc = params.zeros_like();
    let (grad_h_prev, grad_c_prev, grad_x) = prepared.backward_into(cache, grad_h, grad_c, &mut acc)?;
    Ok(StepGradients {
        params: acc,
        grad_h_prev,
        grad_c_prev,
        grad_x,
    })
}

#[cfg(test)]
mod tests;
