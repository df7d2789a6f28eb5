use crate::bptt::{forward_sequence_forced, Network, SequenceBatch};
use crate::cells::{Arch, GateOverride, GateSnapshot};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

/// Which per-step signal of a layer is traced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceSignal {
    /// The layer output `h_t`.
    #[default]
    Output,
    /// An LSTM's memory cell `c_t`, the state that follows the dual-gate
    /// recursion.
    MemoryCell,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TraceOptions<S> {
    /// Layer to trace; the top layer when `None`.
    pub layer: Option<usize>,
    pub signal: TraceSignal,
    pub forced: GateOverride<S>,
}

/// State history `h_0..h_T` of one layer, with the per-step gates when the
/// traced signal obeys `h_t = H_t ⊙ T_t + h_{t-1} ⊙ C_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    states: Vec<Matrix<f64>>,
    gates: Option<Vec<GateSnapshot<f64>>>,
}

impl TraceRecord {
    pub fn new(states: Vec<Matrix<f64>>, gates: Option<Vec<GateSnapshot<f64>>>) -> Result<Self> {
        let shape = states
            .first()
            .ok_or_else(|| Error::State("trace needs at least h_0".into()))?
            .shape();
        if states.iter().any(|s| s.shape() != shape) {
            return Err(Error::shape("trace", "states differ in shape"));
        }
        if let Some(g) = &gates {
            if g.len() + 1 != states.len() {
                return Err(Error::State(format!("{} gate steps for {} states", g.len(), states.len())));
            }
            let bad = g.iter().any(|s| {
                s.transform.shape() != shape || s.transform_gate.shape() != shape || s.carry_gate.shape() != shape
            });
            if bad {
                return Err(Error::shape("trace", "gate and state shapes differ"));
            }
        }
        Ok(TraceRecord { states, gates })
    }

    /// Runs the dual-gate recursion from `h0` through a gate schedule.
    pub fn from_schedule(h0: Matrix<f64>, gates: Vec<GateSnapshot<f64>>) -> Result<Self> {
        let mut states = Vec::with_capacity(gates.len() + 1);
        states.push(h0);
        for g in &gates {
            let next = g.combine(states.last().unwrap())?;
            states.push(next);
        }
        Self::new(states, Some(gates))
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h_0..h_T`.
    pub fn states(&self) -> &[Matrix<f64>] {
        &self.states
    }

    /// Gates of steps `1..=T`.
    pub fn gates(&self) -> Option<&[GateSnapshot<f64>]> {
        self.gates.as_deref()
    }

    pub fn initial(&self) -> &Matrix<f64> {
        &self.states[0]
    }

    pub fn last(&self) -> &Matrix<f64> {
        self.states.last().unwrap()
    }
}

fn widen<S: Scalar>(m: &Matrix<S>) -> Matrix<f64> {
    Matrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c).as_f64())
}

fn widen_gates<S: Scalar>(g: &GateSnapshot<S>) -> GateSnapshot<f64> {
    GateSnapshot {
        transform: widen(&g.transform),
        transform_gate: widen(&g.transform_gate),
        carry_gate: widen(&g.carry_gate),
    }
}

/// One forward pass, keeping every state of the chosen layer. Gates are
/// recorded for dual-gate cells, for an LSTM's memory cell, and (as the
/// `T = 1, C = 0` subcase) for plain and deep-transition cells; an LSTM's
/// output trace has none.
pub fn record_traces<S: Scalar>(
    net: &Network<S>,
    batch: &SequenceBatch<S>,
    opts: &TraceOptions<S>,
) -> Result<TraceRecord> {
    let layer = opts.layer.unwrap_or(net.layers.len() - 1);
    if layer >= net.layers.len() {
        return Err(Error::Config(format!("layer {layer} of a {}-layer network", net.layers.len())));
    }
    let arch = net.arch();
    if opts.signal == TraceSignal::MemoryCell && arch != Arch::Lstm {
        return Err(Error::Config(format!("a {arch} cell has no memory cell to trace")));
    }
    let (_, cache) = forward_sequence_forced(net, batch, opts.forced)?;
    let states = cache
        .states(layer)
        .iter()
        .map(|s| match opts.signal {
            TraceSignal::Output => widen(&s.h),
            TraceSignal::MemoryCell => widen(s.c.as_ref().expect("lstm state carries a memory cell")),
        })
        .collect();
    let gates = match (arch, opts.signal) {
        (Arch::Lstm, TraceSignal::Output) => None,
        _ => Some(
            cache
                .step_caches(layer)
                .iter()
                .map(|c| widen_gates(&c.gate_snapshot()))
                .collect(),
        ),
    };
    TraceRecord::new(states, gates)
}
