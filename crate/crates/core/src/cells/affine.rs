use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

/// Input-to-hidden `W` (D x H), hidden-to-hidden `U` (H x H) and bias `b`
/// (1 x H). With `identity_surrogate` set, the layer applies `U + I`; the
/// identity is never stored in `U` and never receives gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainCellParams<S> {
    pub w: Matrix<S>,
    pub u: Matrix<S>,
    pub b: Matrix<S>,
    pub identity_surrogate: bool,
}

impl<S: Scalar> PlainCellParams<S> {
    pub fn new(w: Matrix<S>, u: Matrix<S>, b: Matrix<S>, identity_surrogate: bool) -> Result<Self> {
        let p = PlainCellParams {
            w,
            u,
            b,
            identity_surrogate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, identity_surrogate: bool) -> Self {
        PlainCellParams {
            w: Matrix::zeros(input_dim, hidden_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: Matrix::zeros(1, hidden_dim),
            identity_surrogate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.u.rows();
        if self.u.cols() != h || self.w.cols() != h || self.b.shape() != (1, h) {
            return Err(Error::shape(
                "cell params",
                format!(
                    "W {:?}, U {:?}, b {:?}",
                    self.w.shape(),
                    self.u.shape(),
                    self.b.shape()
                ),
            ));
        }
        Ok(())
    }

    /// The hidden-to-hidden matrix actually applied: `U + I` under the
    /// surrogate, `U` otherwise.
    pub fn effective_recurrent(&self) -> Cow<'_, Matrix<S>> {
        if self.identity_surrogate {
            let mut m = self.u.clone();
            for i in 0..m.rows() {
                m.set(i, i, m.get(i, i) + S::one());
            }
            Cow::Owned(m)
        } else {
            Cow::Borrowed(&self.u)
        }
    }
}

pub(crate) fn check_operands<S: Scalar>(
    op: &'static str,
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
    input_dim: usize,
    hidden_dim: usize,
) -> Result<()> {
    if x.cols() != input_dim || h_prev.cols() != hidden_dim || x.rows() != h_prev.rows() {
        return Err(Error::shape(
            op,
            format!(
                "x {:?}, h_prev {:?} for D={input_dim}, H={hidden_dim}",
                x.shape(),
                h_prev.shape()
            ),
        ));
    }
    Ok(())
}

/// `x W + h U + b`, where `x` may be absent (stage-two transitions).
pub(crate) fn affine<S: Scalar>(
    x: Option<(&Matrix<S>, &Matrix<S>)>,
    h: &Matrix<S>,
    u: &Matrix<S>,
    b: &Matrix<S>,
) -> Result<Matrix<S>> {
    let mut z = Matrix::zeros(h.rows(), u.cols());
    z.gemm_into(S::one(), h, false, u, false, S::zero())?;
    if let Some((x, w)) = x {
        z.gemm_into(S::one(), x, false, w, false, S::one())?;
    }
    z.add_row_assign(b)?;
    Ok(z)
}

/// Gradient targets of one affine map `z = x W + h U + b`.
pub(crate) struct AffineGrads<'a, S> {
    pub w: Option<&'a mut Matrix<S>>,
    pub u: &'a mut Matrix<S>,
    pub b: &'a mut Matrix<S>,
}

/// Accumulates parameter gradients for `dz` and adds the upstream
/// contributions `dz U_eff^T` into `dh` and `dz W^T` into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn affine_backward<S: Scalar>(
    dz: &Matrix<S>,
    x: Option<(&Matrix<S>, &Matrix<S>)>,
    h_prev: &Matrix<S>,
    u_eff: &Matrix<S>,
    grads: AffineGrads<'_, S>,
    dh: &mut Matrix<S>,
    dx: Option<&mut Matrix<S>>,
) -> Result<()> {
    grads.u.gemm_into(S::one(), h_prev, true, dz, false, S::one())?;
    grads.b.add_assign(&dz.col_sums())?;
    dh.gemm_into(S::one(), dz, false, u_eff, true, S::one())?;
    if let (Some((x, w)), Some(gw)) = (x, grads.w) {
        gw.gemm_into(S::one(), x, true, dz, false, S::one())?;
        if let Some(dx) = dx {
            dx.gemm_into(S::one(), dz, false, w, true, S::one())?;
        }
    }
    Ok(())
}
