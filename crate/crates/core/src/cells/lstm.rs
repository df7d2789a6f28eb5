use super::affine::{affine, affine_backward, check_operands, AffineGrads, PlainCellParams};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Matrix, Scalar};

/// Standard LSTM without peepholes. Each gate block is a
/// [`PlainCellParams`] with the identity surrogate off.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams<S> {
    pub input: PlainCellParams<S>,
    pub forget: PlainCellParams<S>,
    pub candidate: PlainCellParams<S>,
    pub output: PlainCellParams<S>,
}

impl<S: Scalar> LstmCellParams<S> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let g = || PlainCellParams::zeros(input_dim, hidden_dim, false);
        LstmCellParams {
            input: g(),
            forget: g(),
            candidate: g(),
            output: g(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim(), self.hidden_dim());
        for g in self.gates() {
            g.validate()?;
            if g.input_dim() != d || g.hidden_dim() != h || g.identity_surrogate {
                return Err(Error::shape(
                    "lstm params",
                    "gate blocks disagree on dims or carry an identity surrogate",
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn gates(&self) -> [&PlainCellParams<S>; 4] {
        [&self.input, &self.forget, &self.candidate, &self.output]
    }
}

pub(crate) struct LstmCache<S> {
    pub x: Matrix<S>,
    pub h_prev: Matrix<S>,
    pub c_prev: Matrix<S>,
    pub i: Matrix<S>,
    pub f: Matrix<S>,
    pub g: Matrix<S>,
    pub o: Matrix<S>,
    pub c: Matrix<S>,
    pub tanh_c: Matrix<S>,
    pub h: Matrix<S>,
}

fn gate<S: Scalar>(p: &PlainCellParams<S>, x: &Matrix<S>, h: &Matrix<S>, f: fn(S) -> S) -> Result<Matrix<S>> {
    let mut z = affine(Some((x, &p.w)), h, &p.u, &p.b)?;
    z.map_inplace(f);
    Ok(z)
}

pub(crate) fn forward<S: Scalar>(
    p: &LstmCellParams<S>,
    x: &Matrix<S>,
    h_prev: &Matrix<S>,
    c_prev: &Matrix<S>,
) -> Result<LstmCache<S>> {
    check_operands("lstm step", x, h_prev, p.input_dim(), p.hidden_dim())?;
    h_prev.check_same_shape(c_prev, "lstm cell state")?;
    let i = gate(&p.input, x, h_prev, sigmoid)?;
    let f = gate(&p.forget, x, h_prev, sigmoid)?;
    let g = gate(&p.candidate, x, h_prev, S::tanh)?;
    let o = gate(&p.output, x, h_prev, sigmoid)?;

    let n = i.len();
    let (mut c, mut tanh_c, mut h) = (vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]);
    for k in 0..n {
        c[k] = f.as_slice()[k] * c_prev.as_slice()[k] + i.as_slice()[k] * g.as_slice()[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o.as_slice()[k] * tanh_c[k];
    }
    let (rows, cols) = i.shape();
    Ok(LstmCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        c: Matrix::from_vec(rows, cols, c)?,
        tanh_c: Matrix::from_vec(rows, cols, tanh_c)?,
        h: Matrix::from_vec(rows, cols, h)?,
        i,
        f,
        g,
        o,
    })
}

/// Returns `(dh_prev, dc_prev, dx)`.
pub(crate) fn backward<S: Scalar>(
    p: &LstmCellParams<S>,
    cache: &LstmCache<S>,
    grad_h: &Matrix<S>,
    grad_c: Option<&Matrix<S>>,
    acc: &mut LstmCellParams<S>,
) -> Result<(Matrix<S>, Matrix<S>, Matrix<S>)> {
    cache.h.check_same_shape(grad_h, "lstm backward")?;
    if let Some(gc) = grad_c {
        cache.c.check_same_shape(gc, "lstm backward")?;
    }
    let n = cache.h.len();
    let (rows, cols) = cache.h.shape();
    let mut dzi = vec![S::zero(); n];
    let mut dzf = vec![S::zero(); n];
    let mut dzg = vec![S::zero(); n];
    let mut dzo = vec![S::zero(); n];
    let mut dc_prev = vec![S::zero(); n];
    for k in 0..n {
        let gh = grad_h.as_slice()[k];
        let (i, f, g, o) = (
            cache.i.as_slice()[k],
            cache.f.as_slice()[k],
            cache.g.as_slice()[k],
            cache.o.as_slice()[k],
        );
        let tc = cache.tanh_c.as_slice()[k];
        let mut dc = gh * o * (S::one() - tc * tc);
        if let Some(gc) = grad_c {
            dc = dc + gc.as_slice()[k];
        }
        dzo[k] = gh * tc * o * (S::one() - o);
        dzi[k] = dc * g * i * (S::one() - i);
        dzg[k] = dc * i * (S::one() - g * g);
        dzf[k] = dc * cache.c_prev.as_slice()[k] * f * (S::one() - f);
        dc_prev[k] = dc * f;
    }

    let mut dh = Matrix::zeros(rows, cache.h_prev.cols());
    let mut dx = Matrix::zeros_like(&cache.x);
    let targets = [
        (&p.input, &mut acc.input, dzi),
        (&p.forget, &mut acc.forget, dzf),
        (&p.candidate, &mut acc.candidate, dzg),
        (&p.output, &mut acc.output, dzo),
    ];
    for (params, grads, dz) in targets {
        let dz = Matrix::from_vec(rows, cols, dz)?;
        affine_backward(
            &dz,
            Some((&cache.x, &params.w)),
            &cache.h_prev,
            &params.u,
            AffineGrads {
                w: Some(&mut grads.w),
                u: &mut grads.u,
                b: &mut grads.b,
            },
            &mut dh,
            Some(&mut dx),
        )?;
    }
    Ok((dh, Matrix::from_vec(rows, cols, dc_prev)?, dx))
}
