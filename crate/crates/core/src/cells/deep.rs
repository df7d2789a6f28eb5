//! RIN with two transitions per step:
//! `ĥ = ReLU(x W1 + h_{t-1}(U1 + I) + b1)`, `h = ReLU(ĥ (U2 + I) + b2)`.

use std::borrow::Cow;

use super::affine::{affine, affine_backward, check_operands, AffineGrads, PlainCellParams};
use super::plain::relu_backward;
use crate::error::{Error, Result};
use crate::numerics::{relu, Matrix, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct DeepTransitionParams<S> {
    /// First transition; always carries the identity surrogate.
    pub stage1: PlainCellParams<S>,
    /// Second transition, hidden-to-hidden only (`U2 + I`).
    pub u2: Matrix<S>,
    pub b2: Matrix<S>,
}

impl<S: Scalar> DeepTransitionParams<S> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        DeepTransitionParams {
            stage1: PlainCellParams::zeros(input_dim, hidden_dim, true),
            u2: Matrix::zeros(hidden_dim, hidden_dim),
            b2: Matrix::zeros(1, hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.stage1.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.stage1.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        let h = self.hidden_dim();
        if self.u2.shape() != (h, h) || self.b2.shape() != (1, h) {
            return Err(Error::shape(
                "deep transition params",
                format!("U2 {:?}, b2 {:?} for H={h}", self.u2.shape(), self.b2.shape()),
            ));
        }
        if !self.stage1.identity_surrogate {
            return Err(Error::Config("deep transition stage one needs the identity surrogate".into()));
        }
        Ok(())
    }

    pub(crate) fn stage2_effective(&self) -> Matrix<S> {
        let mut m = self.u2.clone();
        for i in 0..m.rows() {
            m.set(i, i, m.get(i, i) + S::one());
        }
        m
    }
}

pub(crate) struct DeepCache<S> {
    pub x: Matrix<S>,
    pub h_prev: Matrix<S>,
    pub mid: Matrix<S>,
    pub h: Matrix<S>,
}

pub(crate) fn forward<S: Scalar>(
    p: &DeepTransitionParams<S>,
    recurrent: &[Cow<'_, Matrix<S>>],
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
) -> Result<DeepCache<S>> {
    check_operands("deep transition step", x, h_prev, p.input_dim(), p.hidden_dim())?;
    let mut mid = affine(Some((x, &p.stage1.w)), h_prev, &recurrent[0], &p.stage1.b)?;
    mid.map_inplace(relu);
    let mut h = affine(None, &mid, &recurrent[1], &p.b2)?;
    h.map_inplace(relu);
    Ok(DeepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        mid,
        h,
    })
}

/// Returns `(dh_prev, dx)`.
pub(crate) fn backward<S: Scalar>(
    p: &DeepTransitionParams<S>,
    recurrent: &[Cow<'_, Matrix<S>>],
    cache: &DeepCache<S>,
    grad_h: &Matrix<S>,
    acc: &mut DeepTransitionParams<S>,
) -> Result<(Matrix<S>, Matrix<S>)> {
    let dz2 = relu_backward(&cache.h, grad_h)?;
    let mut dmid = Matrix::zeros_like(&cache.mid);
    affine_backward(
        &dz2,
        None,
        &cache.mid,
        &recurrent[1],
        AffineGrads {
            w: None,
            u: &mut acc.u2,
            b: &mut acc.b2,
        },
        &mut dmid,
        None,
    )?;
    let dz1 = relu_backward(&cache.mid, &dmid)?;
    let mut dh = Matrix::zeros_like(&cache.h_prev);
    let mut dx = Matrix::zeros_like(&cache.x);
    affine_backward(
        &dz1,
        Some((&cache.x, &p.stage1.w)),
        &cache.h_prev,
        &recurrent[0],
        AffineGrads {
            w: Some(&mut acc.stage1.w),
            u: &mut acc.stage1.u,
            b: &mut acc.stage1.b,
        },
        &mut dh,
        Some(&mut dx),
    )?;
    Ok((dh, dx))
}
