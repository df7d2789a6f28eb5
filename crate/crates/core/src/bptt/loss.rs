use serde::{Deserialize, Serialize};

use super::batch::Targets;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

fn check<S: Scalar>(kind: LossKind, outputs: &Matrix<S>, targets: &Targets<S>) -> Result<()> {
    if outputs.rows() != targets.len() || outputs.rows() == 0 {
        return Err(Error::shape(
            "loss",
            format!("{} outputs for {} targets", outputs.rows(), targets.len()),
        ));
    }
    match (kind, targets) {
        (LossKind::Mse, Targets::Regression(t)) => outputs.check_same_shape(t, "mse"),
        (LossKind::SoftmaxCrossEntropy, Targets::Classes(labels)) => {
            let k = outputs.cols();
            match labels.iter().find(|&&l| l >= k) {
                Some(l) => Err(Error::Domain(format!("label {l} outside {k} classes"))),
                None => Ok(()),
            }
        }
        _ => Err(Error::Config(format!("{kind:?} loss does not fit these targets"))),
    }
}

/// Mean over the batch. For cross-entropy `outputs` are the softmax
/// probabilities.
pub fn loss<S: Scalar>(kind: LossKind, outputs: &Matrix<S>, targets: &Targets<S>) -> Result<S> {
    check(kind, outputs, targets)?;
    let n = S::of(outputs.rows() as f64);
    let total: S = match targets {
        Targets::Regression(t) => outputs
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .map(|(&y, &t)| (y - t) * (y - t))
            .sum(),
        Targets::Classes(labels) => labels
            .iter()
            .enumerate()
            .map(|(r, &l)| -outputs.get(r, l).max(S::min_positive_value()).ln())
            .sum(),
    };
    Ok(total / n)
}

/// Gradient of [`loss`] with respect to the head pre-activation (the
/// regression output, or the logits under a softmax).
pub fn loss_gradient<S: Scalar>(kind: LossKind, outputs: &Matrix<S>, targets: &Targets<S>) -> Result<Matrix<S>> {
    check(kind, outputs, targets)?;
    let n = S::of(outputs.rows() as f64);
    let mut g = outputs.clone();
    match targets {
        Targets::Regression(t) => {
            for (g, &t) in g.as_mut_slice().iter_mut().zip(t.as_slice()) {
                *g = S::of(2.0) * (*g - t) / n;
            }
        }
        Targets::Classes(labels) => {
            for (r, &l) in labels.iter().enumerate() {
                g.set(r, l, g.get(r, l) - S::one());
            }
            g.map_inplace(|v| v / n);
        }
    }
    Ok(g)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<S: Scalar>(outputs: &Matrix<S>, labels: &[usize]) -> Result<S> {
    let predicted = crate::numerics::argmax_rows(outputs)?;
    if predicted.len() != labels.len() {
        return Err(Error::shape("accuracy", format!("{} rows for {} labels", predicted.len(), labels.len())));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(S::of(hits as f64 / labels.len() as f64))
}
