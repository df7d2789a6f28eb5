use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::cells::{Arch, CellConfig, CellParams};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeadKind {
    /// Linear map to one real output.
    Regression,
    /// Linear map to class logits followed by a softmax.
    Classification { classes: usize },
}

impl HeadKind {
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::Regression => 1,
            HeadKind::Classification { classes } => classes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub head: HeadKind,
    #[serde(default = "default_transform")]
    pub transform_activation: Activation,
}

fn default_transform() -> Activation {
    Activation::Tanh
}

impl NetworkConfig {
    pub fn new(arch: Arch, input_dim: usize, hidden_dim: usize, layers: usize, head: HeadKind) -> Self {
        NetworkConfig {
            arch,
            input_dim,
            hidden_dim,
            layers,
            head,
            transform_activation: default_transform(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.layers == 0 {
            return Err(Error::Config(format!(
                "input_dim, hidden_dim and layers must be positive (got {}, {}, {})",
                self.input_dim, self.hidden_dim, self.layers
            )));
        }
        if let HeadKind::Classification { classes } = self.head {
            if classes < 2 {
                return Err(Error::Config(format!("classification needs at least 2 classes, got {classes}")));
            }
        }
        Ok(())
    }

    pub fn layer_config(&self, layer: usize) -> CellConfig {
        CellConfig {
            arch: self.arch,
            input_dim: if layer == 0 { self.input_dim } else { self.hidden_dim },
            hidden_dim: self.hidden_dim,
            transform_activation: self.transform_activation,
        }
    }
}

/// Stack of recurrent layers read out by a linear head on the top layer's
/// final state.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    pub layers: Vec<CellParams<S>>,
    /// `H x O`.
    pub head_w: Matrix<S>,
    /// `1 x O`.
    pub head_b: Matrix<S>,
    pub head: HeadKind,
}

impl<S: Scalar> Network<S> {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let o = config.head.output_dim();
        Ok(Network {
            layers: (0..config.layers).map(|l| CellParams::zeros(&config.layer_config(l))).collect(),
            head_w: Matrix::zeros(config.hidden_dim, o),
            head_b: Matrix::zeros(1, o),
            head: config.head,
        })
    }

    pub fn config(&self) -> NetworkConfig {
        let first = self.layers[0].config();
        NetworkConfig {
            arch: first.arch,
            input_dim: first.input_dim,
            hidden_dim: first.hidden_dim,
            layers: self.layers.len(),
            head: self.head,
            transform_activation: first.transform_activation,
        }
    }

    pub fn arch(&self) -> Arch {
        self.layers[0].arch()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Config("network has no layers".into()))?;
        let h = first.hidden_dim();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.arch() != first.arch() {
                return Err(Error::Config(format!("layer {l} is {}, layer 0 is {}", layer.arch(), first.arch())));
            }
            if layer.hidden_dim() != h || (l > 0 && layer.input_dim() != h) {
                return Err(Error::shape("network", format!("layer {l} dims do not chain")));
            }
        }
        let o = self.head.output_dim();
        if self.head_w.shape() != (h, o) || self.head_b.shape() != (1, o) {
            return Err(Error::shape(
                "network head",
                format!("W {:?}, b {:?} for H={h}, O={o}", self.head_w.shape(), self.head_b.shape()),
            ));
        }
        Ok(())
    }

    /// Every trainable block in a fixed order, named `layer{l}.{block}`,
    /// then `head.W` and `head.b`.
    pub fn blocks(&self) -> Vec<(String, &Matrix<S>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(layer.blocks().into_iter().map(|(n, m)| (format!("layer{l}.{n}"), m)));
        }
        out.push(("head.W".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Matrix<S>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.extend(layer.blocks_mut().into_iter().map(|(n, m)| (format!("layer{l}.{n}"), m)));
        }
        out.push(("head.W".into(), &mut self.head_w));
        out.push(("head.b".into(), &mut self.head_b));
        out
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            layers: self.layers.iter().map(CellParams::zeros_like).collect(),
            head_w: Matrix::zeros_like(&self.head_w),
            head_b: Matrix::zeros_like(&self.head_b),
            head: self.head,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }

    /// Hash of every parameter bit pattern, used to detect stale caches.
    pub(crate) fn fingerprint(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        for (name, m) in self.blocks() {
            name.hash(&mut hasher);
            m.shape().hash(&mut hasher);
            for v in m.as_slice() {
                v.as_f64().to_bits().hash(&mut hasher);
            }
        }
        hasher.finish()
    }
}
