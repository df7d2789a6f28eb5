use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

/// One target per sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets<S> {
    /// `B x 1` regression targets.
    Regression(Matrix<S>),
    /// Class labels, one per batch element.
    Classes(Vec<usize>),
}

impl<S: Scalar> Targets<S> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(m) => m.rows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Regression(m) => Targets::Regression(Matrix::from_fn(idx.len(), m.cols(), |r, c| m.get(idx[r], c))),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// A batch of equal-length sequences stored time-major: `inputs[t]` is the
/// `B x D` slice at step `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch<S> {
    inputs: Vec<Matrix<S>>,
    mask: Option<Matrix<S>>,
    targets: Targets<S>,
}

impl<S: Scalar> SequenceBatch<S> {
    /// Validates shapes; a mask (`T x B`) must mark exactly two steps per
    /// sequence.
    pub fn new(inputs: Vec<Matrix<S>>, mask: Option<Matrix<S>>, targets: Targets<S>) -> Result<Self> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("sequence batch", "T must be at least 1"))?;
        let (b, d) = first.shape();
        if b == 0 || d == 0 {
            return Err(Error::shape("sequence batch", format!("B={b}, D={d}")));
        }
        if let Some(t) = inputs.iter().position(|m| m.shape() != (b, d)) {
            return Err(Error::shape(
                "sequence batch",
                format!("step {} is {:?}, expected {:?}", t + 1, inputs[t].shape(), (b, d)),
            ));
        }
        if targets.len() != b {
            return Err(Error::shape("sequence batch", format!("{} targets for B={b}", targets.len())));
        }
        if let Targets::Regression(m) = &targets {
            if m.cols() != 1 {
                return Err(Error::shape("sequence batch", "regression targets must be B x 1"));
            }
        }
        if let Some(mask) = &mask {
            if mask.shape() != (inputs.len(), b) {
                return Err(Error::shape(
                    "sequence batch",
                    format!("mask {:?} for T={}, B={b}", mask.shape(), inputs.len()),
                ));
            }
            for col in 0..b {
                let marks = (0..mask.rows()).filter(|&t| mask.get(t, col) != S::zero()).count();
                if marks != 2 {
                    return Err(Error::Domain(format!("sequence {col} has {marks} marked positions, expected 2")));
                }
            }
        }
        Ok(SequenceBatch { inputs, mask, targets })
    }

    /// Sequence length `T`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].cols()
    }

    pub fn inputs(&self) -> &[Matrix<S>] {
        &self.inputs
    }

    pub fn mask(&self) -> Option<&Matrix<S>> {
        self.mask.as_ref()
    }

    pub fn targets(&self) -> &Targets<S> {
        &self.targets
    }

    /// Gathers the listed sequences (in order) into a new batch.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let b = self.batch_size();
        if idx.is_empty() {
            return Err(Error::shape("select", "empty selection"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= b) {
            return Err(Error::shape("select", format!("index {bad} out of {b}")));
        }
        let inputs = self
            .inputs
            .iter()
            .map(|m| Matrix::from_fn(idx.len(), m.cols(), |r, c| m.get(idx[r], c)))
            .collect();
        let mask = self
            .mask
            .as_ref()
            .map(|m| Matrix::from_fn(m.rows(), idx.len(), |t, c| m.get(t, idx[c])));
        Ok(SequenceBatch {
            inputs,
            mask,
            targets: self.targets.select(idx),
        })
    }

    /// Consecutive sub-batches of at most `size` sequences, following `order`.
    pub fn chunks(&self, order: &[usize], size: usize) -> Result<Vec<Self>> {
        if size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        order.chunks(size).map(|c| self.select(c)).collect()
    }
}
