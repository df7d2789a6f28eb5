//! Generic dual-gate cell: `h_t = H_t ⊙ T_t + h_{t-1} ⊙ C_t`, where the
//! hidden transform `H_t`, transform gate `T_t` and carry gate `C_t` are each
//! a recurrent layer with its own parameters and activation.

use std::borrow::Cow;

use super::affine::{affine, affine_backward, check_operands, AffineGrads, PlainCellParams};
use crate::error::{Error, Result};
use crate::numerics::{activate_inplace, Activation, Matrix, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct GatedLayer<S> {
    pub params: PlainCellParams<S>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedCellParams<S> {
    /// `σ`, producing the hidden transform `H_t`.
    pub transform: GatedLayer<S>,
    /// `τ`, producing the transform gate `T_t`.
    pub transform_gate: GatedLayer<S>,
    /// `φ`, producing the carry gate `C_t`.
    pub carry_gate: GatedLayer<S>,
}

impl<S: Scalar> GatedCellParams<S> {
    pub fn zeros(input_dim: usize, hidden_dim: usize, transform_activation: Activation) -> Self {
        let layer = |activation| GatedLayer {
            params: PlainCellParams::zeros(input_dim, hidden_dim, false),
            activation,
        };
        GatedCellParams {
            transform: layer(transform_activation),
            transform_gate: layer(Activation::Sigmoid),
            carry_gate: layer(Activation::Sigmoid),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.transform.params.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.transform.params.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim(), self.hidden_dim());
        for l in self.layers() {
            l.params.validate()?;
            if l.params.input_dim() != d || l.params.hidden_dim() != h {
                return Err(Error::shape("gated params", "sub-layers disagree on dims"));
            }
        }
        if !self.transform.activation.is_entrywise() {
            return Err(Error::Config("hidden transform needs an entrywise activation".into()));
        }
        if self.transform_gate.activation != Activation::Sigmoid
            || self.carry_gate.activation != Activation::Sigmoid
        {
            return Err(Error::Config("transform and carry gates must be sigmoidal".into()));
        }
        Ok(())
    }

    pub(crate) fn layers(&self) -> [&GatedLayer<S>; 3] {
        [&self.transform, &self.transform_gate, &self.carry_gate]
    }
}

/// The realized `H_t`, `T_t`, `C_t` of one step of a dual-gate recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct GateSnapshot<S> {
    pub transform: Matrix<S>,
    pub transform_gate: Matrix<S>,
    pub carry_gate: Matrix<S>,
}

impl<S: Scalar> GateSnapshot<S> {
    /// `H ⊙ T + h_prev ⊙ C`.
    pub fn combine(&self, h_prev: &Matrix<S>) -> Result<Matrix<S>> {
        self.transform.check_same_shape(h_prev, "gate combine")?;
        self.transform_gate.check_same_shape(h_prev, "gate combine")?;
        self.carry_gate.check_same_shape(h_prev, "gate combine")?;
        let data = (0..h_prev.len())
            .map(|k| {
                self.transform.as_slice()[k] * self.transform_gate.as_slice()[k]
                    + h_prev.as_slice()[k] * self.carry_gate.as_slice()[k]
            })
            .collect();
        Matrix::from_vec(h_prev.rows(), h_prev.cols(), data)
    }
}

/// Pins the transform and/or carry gate to a constant, e.g. `T ≡ 1, C ≡ 0`
/// for the plain-network subcase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GateOverride<S> {
    pub transform_gate: Option<S>,
    pub carry_gate: Option<S>,
}

pub(crate) struct GatedCache<S> {
    pub x: Matrix<S>,
    pub h_prev: Matrix<S>,
    pub gates: GateSnapshot<S>,
    pub h: Matrix<S>,
}

pub(crate) fn forward<S: Scalar>(
    p: &GatedCellParams<S>,
    recurrent: &[Cow<'_, Matrix<S>>],
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
    forced: GateOverride<S>,
) -> Result<GatedCache<S>> {
    check_operands("gated step", x, h_prev, p.input_dim(), p.hidden_dim())?;
    let eval = |layer: &GatedLayer<S>, u: &Matrix<S>| -> Result<Matrix<S>> {
        let mut z = affine(Some((x, &layer.params.w)), h_prev, u, &layer.params.b)?;
        activate_inplace(layer.activation, &mut z);
        Ok(z)
    };
    let transform = eval(&p.transform, &recurrent[0])?;
    let transform_gate = match forced.transform_gate {
        Some(v) => Matrix::filled(h_prev.rows(), h_prev.cols(), v),
        None => eval(&p.transform_gate, &recurrent[1])?,
    };
    let carry_gate = match forced.carry_gate {
        Some(v) => Matrix::filled(h_prev.rows(), h_prev.cols(), v),
        None => eval(&p.carry_gate, &recurrent[2])?,
    };
    let gates = GateSnapshot {
        transform,
        transform_gate,
        carry_gate,
    };
    let h = gates.combine(h_prev)?;
    Ok(GatedCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        gates,
        h,
    })
}

/// Returns `(dh_prev, dx)`.
pub(crate) fn backward<S: Scalar>(
    p: &GatedCellParams<S>,
    recurrent: &[Cow<'_, Matrix<S>>],
    cache: &GatedCache<S>,
    grad_h: &Matrix<S>,
    acc: &mut GatedCellParams<S>,
) -> Result<(Matrix<S>, Matrix<S>)> {
    cache.h.check_same_shape(grad_h, "gated backward")?;
    let (rows, cols) = cache.h.shape();
    let n = cache.h.len();
    let g = &cache.gates;
    let mut dh: Vec<S> = vec![S::zero(); n];
    let mut dz_transform = vec![S::zero(); n];
    let mut dz_tgate = vec![S::zero(); n];
    let mut dz_carry = vec![S::zero(); n];
    for k in 0..n {
        let gh = grad_h.as_slice()[k];
        let (hh, tt, cc) = (
            g.transform.as_slice()[k],
            g.transform_gate.as_slice()[k],
            g.carry_gate.as_slice()[k],
        );
        dh[k] = gh * cc;
        dz_transform[k] = gh * tt * p.transform.activation.derivative_from_output(hh);
        dz_tgate[k] = gh * hh * p.transform_gate.activation.derivative_from_output(tt);
        dz_carry[k] =
            gh * cache.h_prev.as_slice()[k] * p.carry_gate.activation.derivative_from_output(cc);
    }
    let mut dh = Matrix::from_vec(rows, cols, dh)?;
    let mut dx = Matrix::zeros_like(&cache.x);
    let parts = [
        (&p.transform, &mut acc.transform, dz_transform, &recurrent[0]),
        (&p.transform_gate, &mut acc.transform_gate, dz_tgate, &recurrent[1]),
        (&p.carry_gate, &mut acc.carry_gate, dz_carry, &recurrent[2]),
    ];
    for (layer, grads, dz, u_eff) in parts {
        let dz = Matrix::from_vec(rows, cols, dz)?;
        affine_backward(
            &dz,
            Some((&cache.x, &layer.params.w)),
            &cache.h_prev,
            u_eff,
            AffineGrads {
                w: Some(&mut grads.params.w),
                u: &mut grads.params.u,
                b: &mut grads.params.b,
            },
            &mut dh,
            Some(&mut dx),
        )?;
    }
    Ok((dh, dx))
}
