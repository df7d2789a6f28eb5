use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

/// Entrywise binary operation on identically shaped matrices.
pub fn elementwise<S: Scalar>(op: ElementwiseOp, a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    a.check_same_shape(b, "elementwise")?;
    let f: fn(S, S) -> S = match op {
        ElementwiseOp::Add => |x, y| x + y,
        ElementwiseOp::Sub => |x, y| x - y,
        ElementwiseOp::Mul => |x, y| x * y,
    };
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    SoftmaxRows,
}

impl Activation {
    /// Derivative expressed through the activation's output `y`, valid for the
    /// entrywise kinds. ReLU at exactly zero has derivative 0.
    #[inline]
    pub(crate) fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Relu => {
                if y > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => y * (S::one() - y),
            Activation::Tanh => S::one() - y * y,
            Activation::SoftmaxRows => unreachable!("softmax has no entrywise derivative"),
        }
    }

    pub fn is_entrywise(self) -> bool {
        !matches!(self, Activation::SoftmaxRows)
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    // Split on sign so exp never overflows.
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[inline]
pub(crate) fn relu<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x
    } else {
        S::zero()
    }
}

pub fn activation<S: Scalar>(kind: Activation, a: &Matrix<S>) -> Matrix<S> {
    let mut out = a.clone();
    activate_inplace(kind, &mut out);
    out
}

pub(crate) fn activate_inplace<S: Scalar>(kind: Activation, a: &mut Matrix<S>) {
    match kind {
        Activation::Relu => a.map_inplace(relu),
        Activation::Sigmoid => a.map_inplace(sigmoid),
        Activation::Tanh => a.map_inplace(S::tanh),
        Activation::SoftmaxRows => {
            for r in 0..a.rows() {
                softmax_in_place(a.row_mut(r));
            }
        }
    }
}

fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    MaxIndexPerRow,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Reduced<S> {
    Scalar(S),
    Indices(Vec<usize>),
}

pub fn reduce<S: Scalar>(kind: ReduceKind, a: &Matrix<S>) -> Result<Reduced<S>> {
    match kind {
        ReduceKind::Sum => sum(a).map(Reduced::Scalar),
        ReduceKind::Mean => mean(a).map(Reduced::Scalar),
        ReduceKind::MaxIndexPerRow => argmax_rows(a).map(Reduced::Indices),
    }
}

fn nonempty<S: Scalar>(a: &Matrix<S>, op: &str) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Domain(format!("{op} of an empty matrix")));
    }
    Ok(())
}

pub fn sum<S: Scalar>(a: &Matrix<S>) -> Result<S> {
    nonempty(a, "sum")?;
    Ok(a.as_slice().iter().copied().sum())
}

pub fn mean<S: Scalar>(a: &Matrix<S>) -> Result<S> {
    let total = sum(a)?;
    Ok(total / S::of(a.len() as f64))
}

/// Population variance over every entry.
pub fn variance<S: Scalar>(a: &Matrix<S>) -> Result<S> {
    let mu = mean(a)?;
    let ss: S = a.as_slice().iter().map(|&v| (v - mu) * (v - mu)).sum();
    Ok(ss / S::of(a.len() as f64))
}

/// Index of the largest entry in each row; ties resolve to the first.
pub fn argmax_rows<S: Scalar>(a: &Matrix<S>) -> Result<Vec<usize>> {
    nonempty(a, "max_index_per_row")?;
    Ok((0..a.rows())
        .map(|r| {
            let row = a.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}
