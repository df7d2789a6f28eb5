use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bptt::{Network, NetworkConfig};
use crate::cells::Arch;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, Scalar};

pub const DEFAULT_GAUSSIAN_STD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum InitScheme {
    GaussianSmall {
        #[serde(default = "default_std")]
        std: f64,
    },
    GlorotUniform,
    Orthogonal,
    Identity,
    Zeros,
}

fn default_std() -> f64 {
    DEFAULT_GAUSSIAN_STD
}

impl InitScheme {
    pub fn gaussian() -> Self {
        InitScheme::GaussianSmall { std: DEFAULT_GAUSSIAN_STD }
    }

    /// Parses `gaussian_small`, `gaussian_small:<std>`, `glorot_uniform`,
    /// `orthogonal`, `identity` or `zeros`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Some(std) = text.strip_prefix("gaussian_small:") {
            let std = std
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad gaussian std {std:?}: {e}")))?;
            return Ok(InitScheme::GaussianSmall { std });
        }
        match text {
            "gaussian_small" => Ok(Self::gaussian()),
            "glorot_uniform" => Ok(InitScheme::GlorotUniform),
            "orthogonal" => Ok(InitScheme::Orthogonal),
            "identity" => Ok(InitScheme::Identity),
            "zeros" => Ok(InitScheme::Zeros),
            other => Err(Error::Config(format!("unknown init scheme {other:?}"))),
        }
    }

    pub fn sample<S: Scalar>(self, rows: usize, cols: usize, rng: &mut RngStream) -> Result<Matrix<S>> {
        match self {
            InitScheme::GaussianSmall { std } => {
                if !(std > 0.0 && std.is_finite()) {
                    return Err(Error::Config(format!("gaussian std must be positive, got {std}")));
                }
                Ok(Matrix::from_fn(rows, cols, |_, _| S::of(rng.normal(std))))
            }
            InitScheme::GlorotUniform => {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                Ok(Matrix::from_fn(rows, cols, |_, _| S::of(rng.uniform_in(-limit, limit))))
            }
            InitScheme::Orthogonal => Ok(orthogonal(rows, cols, rng)),
            InitScheme::Identity => {
                if rows != cols {
                    return Err(Error::Config(format!("identity init needs a square block, got {rows}x{cols}")));
                }
                Ok(Matrix::identity(rows))
            }
            InitScheme::Zeros => Ok(Matrix::zeros(rows, cols)),
        }
    }
}

/// Orthonormal columns (or rows, when wide) from the QR factorization of a
/// Gaussian matrix, with the signs of `R`'s diagonal folded into `Q`.
fn orthogonal<S: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix<S> {
    let (n, k) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.normal(1.0)).collect()).collect();
    for j in 0..k {
        let original: Vec<f64> = q[j].clone();
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                let qi = q[i].clone();
                for (v, a) in q[j].iter_mut().zip(&qi) {
                    *v -= dot * a;
                }
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        // R_jj = <q_j, a_j>; flip so that it is positive.
        let r_jj: f64 = q[j].iter().zip(&original).map(|(a, b)| a * b).sum();
        let sign = if r_jj < 0.0 { -1.0 } else { 1.0 };
        for v in &mut q[j] {
            *v *= sign / norm;
        }
    }
    if rows >= cols {
        Matrix::from_fn(rows, cols, |r, c| S::of(q[c][r]))
    } else {
        Matrix::from_fn(rows, cols, |r, c| S::of(q[r][c]))
    }
}

/// Initialization scheme per block name. Layer blocks are keyed by their
/// in-layer name (`U`, `W_f`, `carry_gate.b`, ...) and shared by all layers;
/// the head uses `head.W` and `head.b`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct InitPlan(pub BTreeMap<String, InitScheme>);

impl InitPlan {
    pub fn defaults(arch: Arch) -> Self {
        use InitScheme::*;
        let g = InitScheme::gaussian();
        let mut plan: BTreeMap<String, InitScheme> = BTreeMap::new();
        let mut set = |names: &[&str], scheme: InitScheme| {
            for n in names {
                plan.insert((*n).to_string(), scheme);
            }
        };
        match arch {
            Arch::Rin => {
                set(&["W", "U"], g);
                set(&["b"], Zeros);
            }
            Arch::Irnn => {
                set(&["W"], g);
                set(&["U"], Identity);
                set(&["b"], Zeros);
            }
            Arch::Lstm => {
                set(&["W_i", "W_f", "W_c", "W_o"], GlorotUniform);
                set(&["U_i", "U_f", "U_c", "U_o"], Orthogonal);
                set(&["b_i", "b_f", "b_c", "b_o"], Zeros);
            }
            Arch::Gated => {
                for part in ["transform", "transform_gate", "carry_gate"] {
                    set(&[&format!("{part}.W")], GlorotUniform);
                    set(&[&format!("{part}.U")], Orthogonal);
                    set(&[&format!("{part}.b")], Zeros);
                }
            }
            Arch::RinDt => {
                set(&["W1", "U1", "U2"], g);
                set(&["b1", "b2"], Zeros);
            }
        }
        set(&["head.W"], GlorotUniform);
        set(&["head.b"], Zeros);
        InitPlan(plan)
    }

    /// Defaults with the given entries replaced.
    pub fn with_overrides(arch: Arch, overrides: &BTreeMap<String, InitScheme>) -> Self {
        let mut plan = Self::defaults(arch);
        plan.0.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        plan
    }
}

fn plan_key(full_name: &str) -> &str {
    if full_name.starts_with("head.") {
        return full_name;
    }
    full_name.split_once('.').map_or(full_name, |(_, rest)| rest)
}

/// Builds a network with every block drawn from its scheme. Blocks are drawn
/// in [`Network::blocks`] order from one stream.
pub fn initialize<S: Scalar>(config: &NetworkConfig, plan: &InitPlan, rng: &mut RngStream) -> Result<Network<S>> {
    let mut net = Network::zeros(config)?;
    for (name, block) in net.blocks_mut() {
        let key = plan_key(&name);
        let scheme = plan
            .0
            .get(key)
            .ok_or_else(|| Error::Config(format!("no init spec for block {name} (key {key:?})")))?;
        *block = scheme.sample(block.rows(), block.cols(), rng)?;
    }
    Ok(net)
}
