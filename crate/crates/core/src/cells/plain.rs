//! ReLU recurrent layers: RIN (`U + I`, identity fixed) and IRNN (`U`
//! trainable, identity only as an initialization).

use super::affine::{affine, affine_backward, check_operands, AffineGrads, PlainCellParams};
use crate::error::Result;
use crate::numerics::{relu, Matrix, Scalar};

pub(crate) struct PlainCache<S> {
    pub x: Matrix<S>,
    pub h_prev: Matrix<S>,
    pub h: Matrix<S>,
}

pub(crate) fn forward<S: Scalar>(
    p: &PlainCellParams<S>,
    u_eff: &Matrix<S>,
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
) -> Result<PlainCache<S>> {
    check_operands("plain step", x, h_prev, p.input_dim(), p.hidden_dim())?;
    let mut h = affine(Some((x, &p.w)), h_prev, u_eff, &p.b)?;
    h.map_inplace(relu);
    Ok(PlainCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        h,
    })
}

/// Returns `(dh_prev, dx)`.
pub(crate) fn backward<S: Scalar>(
    p: &PlainCellParams<S>,
    u_eff: &Matrix<S>,
    cache: &PlainCache<S>,
    grad_h: &Matrix<S>,
    acc: &mut PlainCellParams<S>,
) -> Result<(Matrix<S>, Matrix<S>)> {
    let dz = relu_backward(&cache.h, grad_h)?;
    let mut dh = Matrix::zeros_like(&cache.h_prev);
    let mut dx = Matrix::zeros_like(&cache.x);
    affine_backward(
        &dz,
        Some((&cache.x, &p.w)),
        &cache.h_prev,
        u_eff,
        AffineGrads {
            w: Some(&mut acc.w),
            u: &mut acc.u,
            b: &mut acc.b,
        },
        &mut dh,
        Some(&mut dx),
    )?;
    Ok((dh, dx))
}

/// `grad ⊙ 1[out > 0]`; the subgradient at exactly zero is 0.
pub(crate) fn relu_backward<S: Scalar>(out: &Matrix<S>, grad: &Matrix<S>) -> Result<Matrix<S>> {
    out.check_same_shape(grad, "relu backward")?;
    let data = out
        .as_slice()
        .iter()
        .zip(grad.as_slice())
        .map(|(&y, &g)| if y > S::zero() { g } else { S::zero() })
        .collect();
    Matrix::from_vec(out.rows(), out.cols(), data)
}
