use serde::{Deserialize, Serialize};

use crate::bptt::{GradientSet, Network};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adam,
    Rmsprop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_eps")]
    pub epsilon: f64,
    pub batch_size: usize,
}

fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_rho() -> f64 {
    0.9
}
fn d_eps() -> f64 {
    1e-8
}

impl OptimConfig {
    pub fn adam(learning_rate: f64, batch_size: usize) -> Self {
        OptimConfig {
            algorithm: Algorithm::Adam,
            learning_rate,
            beta1: d_beta1(),
            beta2: d_beta2(),
            rho: d_rho(),
            epsilon: d_eps(),
            batch_size,
        }
    }

    pub fn rmsprop(learning_rate: f64, batch_size: usize) -> Self {
        OptimConfig {
            algorithm: Algorithm::Rmsprop,
            ..Self::adam(learning_rate, batch_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("rho", self.rho)?;
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Moment accumulators, one per parameter block. `second` is the squared
/// gradient average for both algorithms; `first` is only used by Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<S> {
    pub step: u64,
    pub names: Vec<String>,
    pub first: Vec<Matrix<S>>,
    pub second: Vec<Matrix<S>>,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(net: &Network<S>) -> Self {
        let blocks = net.blocks();
        OptimState {
            step: 0,
            names: blocks.iter().map(|(n, _)| n.clone()).collect(),
            first: blocks.iter().map(|(_, m)| Matrix::zeros_like(m)).collect(),
            second: blocks.iter().map(|(_, m)| Matrix::zeros_like(m)).collect(),
        }
    }

    fn check(&self, net: &Network<S>, grads: &GradientSet<S>) -> Result<()> {
        let blocks = net.blocks();
        if blocks.len() != grads.blocks.len() || blocks.len() != self.names.len() {
            return Err(Error::shape(
                "optimizer",
                format!("{} params, {} grads, {} state blocks", blocks.len(), grads.blocks.len(), self.names.len()),
            ));
        }
        for (i, (name, p)) in blocks.iter().enumerate() {
            let (gname, g) = &grads.blocks[i];
            if gname != name || &self.names[i] != name {
                return Err(Error::shape("optimizer", format!("block {i}: {name} vs {gname} vs {}", self.names[i])));
            }
            if g.shape() != p.shape() || self.first[i].shape() != p.shape() || self.second[i].shape() != p.shape() {
                return Err(Error::shape("optimizer", format!("{name}: {:?} vs {:?}", p.shape(), g.shape())));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam step.
pub fn adam_update<S: Scalar>(
    net: &mut Network<S>,
    grads: &GradientSet<S>,
    state: &mut OptimState<S>,
    cfg: &OptimConfig,
) -> Result<()> {
    if cfg.algorithm != Algorithm::Adam {
        return Err(Error::Config("adam_update called with a non-adam config".into()));
    }
    state.check(net, grads)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
    let c1 = S::one() - b1.powi(t);
    let c2 = S::one() - b2.powi(t);
    let (lr, eps) = (S::of(cfg.learning_rate), S::of(cfg.epsilon));
    for (i, (_, p)) in net.blocks_mut().into_iter().enumerate() {
        let g = grads.blocks[i].1.as_slice();
        let m = state.first[i].as_mut_slice();
        let v = state.second[i].as_mut_slice();
        for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
            m[k] = b1 * m[k] + (S::one() - b1) * g[k];
            v[k] = b2 * v[k] + (S::one() - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `acc = ρ acc + (1 - ρ) g²`, `p -= α g / sqrt(acc + ε)`.
pub fn rmsprop_update<S: Scalar>(
    net: &mut Network<S>,
    grads: &GradientSet<S>,
    state: &mut OptimState<S>,
    cfg: &OptimConfig,
) -> Result<()> {
    if cfg.algorithm != Algorithm::Rmsprop {
        return Err(Error::Config("rmsprop_update called with a non-rmsprop config".into()));
    }
    state.check(net, grads)?;
    state.step += 1;
    let (rho, lr, eps) = (S::of(cfg.rho), S::of(cfg.learning_rate), S::of(cfg.epsilon));
    for (i, (_, p)) in net.blocks_mut().into_iter().enumerate() {
        let g = grads.blocks[i].1.as_slice();
        let acc = state.second[i].as_mut_slice();
        for (k, w) in p.as_mut_slice().iter_mut().enumerate() {
            acc[k] = rho * acc[k] + (S::one() - rho) * g[k] * g[k];
            *w = *w - lr * g[k] / (acc[k] + eps).sqrt();
        }
    }
    Ok(())
}

/// Dispatches on `cfg.algorithm`.
pub fn apply_update<S: Scalar>(
    net: &mut Network<S>,
    grads: &GradientSet<S>,
    state: &mut OptimState<S>,
    cfg: &OptimConfig,
) -> Result<()> {
    match cfg.algorithm {
        Algorithm::Adam => adam_update(net, grads, state, cfg),
        Algorithm::Rmsprop => rmsprop_update(net, grads, state, cfg),
    }
}
