//! Iterative-estimation diagnostics and checks of the dual-gate expansion.
//!
//! A trace is the state history `h_0..h_T` of one layer over a batch. Two
//! average-estimation-error series are derived from it: the distance of
//! every step to the final state, and the change made by every step. Both
//! pool the batch and the hidden units into one mean and one variance per
//! step.
//!
//! For cells written as `h_t = H_t ⊙ T_t + h_{t-1} ⊙ C_t`, the trace also
//! keeps the realized gates, and the final state can be rebuilt two ways:
//!
//! * by the closed-form expansion over carry-gate products
//!   ([`expand_gated`]);
//! * as `h_0 + λ`, where `λ` is assembled from the residuals
//!   `ε_t = h_t - h_{t-1}` ([`lambda_decompose`]).
//!
//! The conventions `T_0 = 1`, `C_0 = 0`, `h_{T+1} = h_T`, `T_{T+1} = 0` and
//! `C_{T+1} = 1` apply throughout. All arithmetic here is in `f64`
//! regardless of the model's scalar type.

mod aee;
mod expansion;
mod report;
mod trace;

pub use aee::{aee_step, aee_vs_final, AeeSeries};
pub use expansion::{
    carry_closed_from_first, carry_closed_state, expand_gated, lambda_decompose, LambdaDecomposition,
    ResidualSeries,
};
pub use report::{read_aee_csv, write_aee_csv, AeeMetric, AeeReport, AEE_HEADER};
pub use trace::{record_traces, TraceOptions, TraceRecord, TraceSignal};

/// Both series of a trace, labelled.
pub fn aee_reports(arch: &str, trace: &TraceRecord) -> crate::Result<[AeeReport; 2]> {
    Ok([
        AeeReport {
            arch: arch.to_string(),
            metric: AeeMetric::AeeFinal,
            series: aee_vs_final(trace)?,
        },
        AeeReport {
            arch: arch.to_string(),
            metric: AeeMetric::AeeStep,
            series: aee_step(trace)?,
        },
    ])
}
