//! Unrolled forward pass over a layer stack, losses, exact backpropagation
//! through time and global-norm gradient clipping.

mod batch;
mod loss;
mod network;

pub use batch::{SequenceBatch, Targets};
pub use loss::{accuracy, loss, loss_gradient, LossKind};
pub use network::{HeadKind, Network, NetworkConfig};

use crate::cells::{CellState, GateOverride, StepCache};
use crate::error::{Error, Result};
use crate::numerics::{activate_inplace, Activation, Matrix, Scalar};

impl HeadKind {
    pub fn loss_kind(self) -> LossKind {
        match self {
            HeadKind::Regression => LossKind::Mse,
            HeadKind::Classification { .. } => LossKind::SoftmaxCrossEntropy,
        }
    }
}

/// Everything the backward pass needs from one forward pass.
pub struct UnrollCache<S> {
    /// `states[l][t]` is layer `l`'s state `h_t`, `t = 0..=T`.
    states: Vec<Vec<CellState<S>>>,
    steps: Vec<Vec<StepCache<S>>>,
    logits: Matrix<S>,
    outputs: Matrix<S>,
    fingerprint: u64,
}

impl<S: Scalar> UnrollCache<S> {
    /// Sequence length `T`.
    pub fn len(&self) -> usize {
        self.steps[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layer_count(&self) -> usize {
        self.states.len()
    }

    /// `h_0..h_T` of one layer.
    pub fn states(&self, layer: usize) -> &[CellState<S>] {
        &self.states[layer]
    }

    pub fn step_caches(&self, layer: usize) -> &[StepCache<S>] {
        &self.steps[layer]
    }

    pub fn logits(&self) -> &Matrix<S> {
        &self.logits
    }

    pub fn outputs(&self) -> &Matrix<S> {
        &self.outputs
    }
}

pub fn forward_sequence<S: Scalar>(net: &Network<S>, batch: &SequenceBatch<S>) -> Result<(Matrix<S>, UnrollCache<S>)> {
    forward_sequence_forced(net, batch, GateOverride::default())
}

/// As [`forward_sequence`], with the dual-gate cells' gates pinned in every
/// layer.
pub fn forward_sequence_forced<S: Scalar>(
    net: &Network<S>,
    batch: &SequenceBatch<S>,
    forced: GateOverride<S>,
) -> Result<(Matrix<S>, UnrollCache<S>)> {
    net.validate()?;
    if batch.input_dim() != net.input_dim() {
        return Err(Error::shape(
            "forward_sequence",
            format!("batch D={} for network D={}", batch.input_dim(), net.input_dim()),
        ));
    }
    let b = batch.batch_size();
    let mut states = Vec::with_capacity(net.layers.len());
    let mut steps = Vec::with_capacity(net.layers.len());
    let mut below: Option<Vec<Matrix<S>>> = None;
    for layer in &net.layers {
        let prepared = layer.prepare();
        let inputs = below.as_deref().unwrap_or(batch.inputs());
        let mut layer_states = Vec::with_capacity(inputs.len() + 1);
        let mut layer_steps = Vec::with_capacity(inputs.len());
        layer_states.push(layer.initial_state(b));
        for x in inputs {
            let (next, cache) = prepared.forward_forced(x, layer_states.last().unwrap(), forced)?;
            layer_states.push(next);
            layer_steps.push(cache);
        }
        below = Some(layer_states[1..].iter().map(|s| s.h.clone()).collect());
        states.push(layer_states);
        steps.push(layer_steps);
    }
    let top = &states.last().unwrap().last().unwrap().h;
    let mut logits = Matrix::zeros(b, net.head.output_dim());
    logits.gemm_into(S::one(), top, false, &net.head_w, false, S::zero())?;
    logits.add_row_assign(&net.head_b)?;
    let mut outputs = logits.clone();
    if let HeadKind::Classification { .. } = net.head {
        activate_inplace(Activation::SoftmaxRows, &mut outputs);
    }
    let cache = UnrollCache {
        states,
        steps,
        logits,
        outputs: outputs.clone(),
        fingerprint: net.fingerprint(),
    };
    Ok((outputs, cache))
}

/// Gradients for every trainable block, named as in [`Network::blocks`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<S> {
    pub blocks: Vec<(String, Matrix<S>)>,
    /// Global L2 norm before clipping, once [`clip_gradients`] has run.
    pub clip_stat: Option<S>,
}

impl<S: Scalar> GradientSet<S> {
    fn from_network(acc: Network<S>) -> Self {
        GradientSet {
            blocks: acc.blocks().into_iter().map(|(n, m)| (n, m.clone())).collect(),
            clip_stat: None,
        }
    }

    pub fn norm(&self) -> S {
        self.blocks.iter().map(|(_, m)| m.norm_sq()).sum::<S>().sqrt()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<S>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn scale(&mut self, k: S) {
        for (_, m) in &mut self.blocks {
            m.map_inplace(|v| v * k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|(_, m)| m.is_finite())
    }
}

/// Exact gradients of the loss whose derivative with respect to the head
/// pre-activation is `d_head`. Steps are visited in reverse order, top layer
/// first.
pub fn backward_sequence<S: Scalar>(
    net: &Network<S>,
    cache: &UnrollCache<S>,
    d_head: &Matrix<S>,
) -> Result<GradientSet<S>> {
    if cache.fingerprint != net.fingerprint() || cache.layer_count() != net.layers.len() {
        return Err(Error::State("unroll cache was produced by different parameters".into()));
    }
    d_head.check_same_shape(&cache.logits, "backward_sequence")?;
    let mut acc = net.zeros_like();
    let t_len = cache.len();
    let top = &cache.states.last().unwrap()[t_len].h;
    acc.head_w.gemm_into(S::one(), top, true, d_head, false, S::zero())?;
    acc.head_b = d_head.col_sums();

    let mut top_grad = Matrix::zeros_like(top);
    top_grad.gemm_into(S::one(), d_head, false, &net.head_w, true, S::zero())?;
    // Upstream dL/dh_t arriving from above (the head or the next layer).
    let mut upstream: Vec<Option<Matrix<S>>> = vec![None; t_len];
    upstream[t_len - 1] = Some(top_grad);

    for (l, layer) in net.layers.iter().enumerate().rev() {
        let prepared = layer.prepare();
        let states = &cache.states[l];
        let mut carry_h = Matrix::zeros_like(&states[0].h);
        let mut carry_c = states[0].c.as_ref().map(Matrix::zeros_like);
        let mut below = vec![None; t_len];
        for t in (0..t_len).rev() {
            let mut grad_h = carry_h;
            if let Some(g) = upstream[t].take() {
                grad_h.add_assign(&g)?;
            }
            let (dh, dc, dx) = prepared.backward_into(&cache.steps[l][t], &grad_h, carry_c.as_ref(), &mut acc.layers[l])?;
            carry_h = dh;
            carry_c = dc;
            below[t] = Some(dx);
        }
        upstream = below;
    }
    Ok(GradientSet::from_network(acc))
}

/// Loss, gradients and outputs for one batch.
pub fn loss_and_gradients<S: Scalar>(
    net: &Network<S>,
    batch: &SequenceBatch<S>,
) -> Result<(S, GradientSet<S>, Matrix<S>)> {
    let kind = net.head.loss_kind();
    let (outputs, cache) = forward_sequence(net, batch)?;
    let value = loss(kind, &outputs, batch.targets())?;
    let d_head = loss_gradient(kind, &outputs, batch.targets())?;
    let grads = backward_sequence(net, &cache, &d_head)?;
    Ok((value, grads, outputs))
}

/// Rescales every block by `threshold / norm` when the global L2 norm
/// exceeds `threshold`. Records the pre-clip norm.
pub fn clip_gradients<S: Scalar>(mut grads: GradientSet<S>, threshold: S) -> Result<GradientSet<S>> {
    if !(threshold > S::zero()) {
        return Err(Error::Config(format!("clip threshold must be positive, got {threshold}")));
    }
    let norm = grads.norm();
    if norm > threshold {
        grads.scale(threshold / norm);
        while grads.norm() > threshold {
            grads.scale(S::one() - S::epsilon());
        }
    }
    grads.clip_stat = Some(norm);
    Ok(grads)
}
