//! Minimal feedforward engine with manual backpropagation.
//!
//! The one feature that matters for in-network learning: the backward pass
//! starts from an arbitrary error vector injected at the output activations
//! and returns the error vector at the input, so a caller can split it and
//! ship the pieces upstream.
//!
//! Batch convention: `delta_out[i]` is the gradient of sample `i`'s own loss
//! with respect to its output activations. Parameter gradients are averaged
//! over the batch (gradient of the mean loss); `delta_in` stays per-sample.

mod gaussian;
mod loss;

pub use gaussian::{gaussian_kl_closed_form, gaussian_log_ratio, gaussian_log_ratio_rows, sample_latent, GaussianHead};
pub use loss::{log_loss, LOG_LOSS_FLOOR};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
}

impl Activation {
    /// Apply in place to one sample's pre-activations.
    pub fn apply(self, z: &[f64], out: &mut [f64]) {
        match self {
            Activation::Linear => out.copy_from_slice(z),
            Activation::Relu => {
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = if v > 0.0 { v } else { 0.0 };
                }
            }
            Activation::Sigmoid => {
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = 1.0 / (1.0 + (-v).exp());
                }
            }
            Activation::Tanh => {
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = v.tanh();
                }
            }
            Activation::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = (v - m).exp();
                    sum += *o;
                }
                for o in out.iter_mut() {
                    *o /= sum;
                }
            }
        }
    }

    /// Map a gradient w.r.t. activations `a = σ(z)` to a gradient w.r.t. `z`.
    pub fn backprop(self, z: &[f64], a: &[f64], grad_a: &[f64], out: &mut [f64]) {
        match self {
            Activation::Linear => out.copy_from_slice(grad_a),
            Activation::Relu => {
                // σ'(0) = 0
                for ((o, &zi), &g) in out.iter_mut().zip(z).zip(grad_a) {
                    *o = if zi > 0.0 { g } else { 0.0 };
                }
            }
            Activation::Sigmoid => {
                for ((o, &ai), &g) in out.iter_mut().zip(a).zip(grad_a) {
                    *o = g * ai * (1.0 - ai);
                }
            }
            Activation::Tanh => {
                for ((o, &ai), &g) in out.iter_mut().zip(a).zip(grad_a) {
                    *o = g * (1.0 - ai * ai);
                }
            }
            Activation::Softmax => {
                let dot: f64 = a.iter().zip(grad_a).map(|(p, g)| p * g).sum();
                for ((o, &p), &g) in out.iter_mut().zip(a).zip(grad_a) {
                    *o = p * (g - dot);
                }
            }
        }
    }
}

/// One affine layer followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out_dim × in_dim]`
    weights: Tensor,
    /// `[out_dim]`
    biases: Tensor,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, biases: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return shape_err("layer weights must be a matrix");
        }
        if biases.len() != weights.rows() {
            return shape_err(format!("weights have {} rows but biases have length {}", weights.rows(), biases.len()));
        }
        let biases = Tensor::vector(biases.data());
        Ok(Self { weights, biases, activation })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument(format!("layer dims must be positive, got {in_dim}→{out_dim}")));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let w: Vec<f64> = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self::new(Tensor::new(vec![out_dim, in_dim], w)?, Tensor::zeros(&[out_dim]), activation)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn biases(&self) -> &Tensor {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut Tensor {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut Tensor {
        &mut self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn affine(&self, input: &Tensor) -> Tensor {
        let (b, n_in, n_out) = (input.rows(), self.in_dim(), self.out_dim());
        let mut z = Tensor::zeros(&[b, n_out]);
        let w = self.weights.data();
        let bias = self.biases.data();
        for r in 0..b {
            let x = input.row(r);
            let zr = z.row_mut(r);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = bias[o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                zr[o] = acc;
            }
        }
        z
    }
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Tensor,
    pub biases: Tensor,
}

impl LayerGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self { weights: Tensor::zeros(layer.weights.shape()), biases: Tensor::zeros(layer.biases.shape()) }
    }

    pub fn add_assign(&mut self, other: &LayerGrads) -> Result<()> {
        self.weights.add_assign(&other.weights)?;
        self.biases.add_assign(&other.biases)
    }
}

/// Output of [`FeedForwardNet::backward_from_delta`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Vec<LayerGrads>,
    /// Error vector at the input layer, `[batch × in_dim]`.
    pub delta_in: Tensor,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// a^[0] (the input) through a^[L]
    activations: Vec<Tensor>,
    /// z^[1] through z^[L]
    pre: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct FeedForwardNet {
    layers: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
}

impl PartialEq for FeedForwardNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl FeedForwardNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return shape_err(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    l,
                    pair[0].out_dim(),
                    l + 1,
                    pair[1].in_dim()
                ));
            }
        }
        Ok(Self { layers, cache: None })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn final_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != 2 || batch.cols() != self.in_dim() {
            return shape_err(format!("batch shape {:?} does not match input dim {}", batch.shape(), self.in_dim()));
        }
        Ok(())
    }

    /// Forward pass that records every intermediate activation.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let z = layer.affine(activations.last().expect("non-empty"));
            let a = activate(layer.activation, &z);
            pre.push(z);
            activations.push(a);
        }
        let out = activations.last().expect("non-empty").clone();
        self.cache = Some(ForwardCache { activations, pre });
        Ok(out)
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in &self.layers {
            a = activate(layer.activation, &layer.affine(&a));
        }
        Ok(a)
    }

    /// Backpropagate an error vector injected at the output activations.
    pub fn backward_from_delta(&self, delta_out: &Tensor) -> Result<Backward> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::ProtocolOrder("backward called without a live forward cache".into()))?;
        let batch = cache.activations[0].rows();
        if delta_out.shape() != [batch, self.out_dim()] {
            return shape_err(format!(
                "delta_out shape {:?} does not match cached output [{}, {}]",
                delta_out.shape(),
                batch,
                self.out_dim()
            ));
        }
        let inv_b = 1.0 / batch as f64;
        let mut grads = vec![None; self.layers.len()];
        let mut grad_a = delta_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[l];
            let a = &cache.activations[l + 1];
            let a_prev = &cache.activations[l];
            let (n_in, n_out) = (layer.in_dim(), layer.out_dim());
            let mut delta = Tensor::zeros(&[batch, n_out]);
            for r in 0..batch {
                layer.activation.backprop(z.row(r), a.row(r), grad_a.row(r), delta.row_mut(r));
            }
            let mut gw = Tensor::zeros(&[n_out, n_in]);
            let mut gb = Tensor::zeros(&[n_out]);
            {
                let gwd = gw.data_mut();
                for r in 0..batch {
                    let d = delta.row(r);
                    let x = a_prev.row(r);
                    for o in 0..n_out {
                        let row = &mut gwd[o * n_in..(o + 1) * n_in];
                        for (g, xi) in row.iter_mut().zip(x) {
                            *g += d[o] * xi;
                        }
                    }
                }
                let gbd = gb.data_mut();
                for r in 0..batch {
                    for (g, d) in gbd.iter_mut().zip(delta.row(r)) {
                        *g += d;
                    }
                }
            }
            gw.scale(inv_b);
            gb.scale(inv_b);
            grads[l] = Some(LayerGrads { weights: gw, biases: gb });

            // δ^[l-1] = (w^[l])^T δ^[l]; at the input layer no activation factor follows
            let w = layer.weights.data();
            let mut prev = Tensor::zeros(&[batch, n_in]);
            for r in 0..batch {
                let d = delta.row(r);
                let p = prev.row_mut(r);
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (pi, wi) in p.iter_mut().zip(row) {
                        *pi += wi * d[o];
                    }
                }
            }
            grad_a = prev;
        }
        Ok(Backward { grads: grads.into_iter().map(|g| g.expect("filled")).collect(), delta_in: grad_a })
    }

    /// `w ← w − η·∇w`, `b ← b − η·∇b`. Invalidates the forward cache.
    pub fn apply_sgd(&mut self, grads: &[LayerGrads], eta: f64) -> Result<()> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be a non-negative number, got {eta}")));
        }
        if grads.len() != self.layers.len() {
            return shape_err(format!("{} gradient blocks for {} layers", grads.len(), self.layers.len()));
        }
        for (layer, g) in self.layers.iter().zip(grads) {
            if g.weights.shape() != layer.weights.shape() || g.biases.len() != layer.biases.len() {
                return shape_err("gradient shape does not match layer");
            }
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (w, d) in layer.weights.data_mut().iter_mut().zip(g.weights.data()) {
                *w -= eta * d;
            }
            for (b, d) in layer.biases.data_mut().iter_mut().zip(g.biases.data()) {
                *b -= eta * d;
            }
        }
        self.cache = None;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer: weights (row-major), then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(l.biases.data());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return shape_err(format!("expected {} parameters, got {}", self.num_params(), params.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.data_mut().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.data_mut().copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        self.cache = None;
        Ok(())
    }

    /// `(in, out, activation)` per layer.
    pub fn signature(&self) -> Vec<(usize, usize, Activation)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim(), l.activation)).collect()
    }
}

fn activate(act: Activation, z: &Tensor) -> Tensor {
    let mut a = Tensor::zeros(z.shape());
    for r in 0..z.rows() {
        act.apply(z.row(r), a.row_mut(r));
    }
    a
}

/// Flatten gradients in the same order as [`FeedForwardNet::params`].
pub fn flatten_grads(grads: &[LayerGrads]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(g.weights.data());
        out.extend_from_slice(g.biases.data());
    }
    out
}

/// One layer of an architecture description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
}

/// Architecture description: layer widths and activations, plus an
/// optional Gaussian latent head. The input width is supplied at build
/// time (it follows from the graph).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
}

impl NetSpec {
    pub fn new(layers: &[(usize, Activation)]) -> Self {
        Self {
            layers: layers.iter().map(|&(out_dim, activation)| LayerSpec { out_dim, activation }).collect(),
            latent_dim: None,
        }
    }

    pub fn with_latent(mut self, latent_dim: usize) -> Self {
        self.latent_dim = Some(latent_dim);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NetSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(Error::InvalidArgument("architecture has no layers".into()));
        };
        if self.layers.iter().any(|l| l.out_dim == 0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if let Some(d) = self.latent_dim {
            if d == 0 || last.out_dim != 2 * d {
                return Err(Error::InvalidArgument(format!(
                    "latent head of dim {d} needs a final layer of width {}, got {}",
                    2 * d,
                    last.out_dim
                )));
            }
            if last.activation == Activation::Softmax {
                return Err(Error::InvalidArgument("a latent head cannot sit on a softmax layer".into()));
            }
        }
        Ok(())
    }

    /// Width of the vector this network emits downstream.
    pub fn emitted_dim(&self) -> usize {
        match self.latent_dim {
            Some(d) => d,
            None => self.layers.last().map_or(0, |l| l.out_dim),
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, in_dim: usize, rng: &mut R) -> Result<(FeedForwardNet, Option<GaussianHead>)> {
        self.validate()?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut prev = in_dim;
        for l in &self.layers {
            layers.push(DenseLayer::init(prev, l.out_dim, l.activation, rng)?);
            prev = l.out_dim;
        }
        let net = FeedForwardNet::new(layers)?;
        let head = self.latent_dim.map(GaussianHead::new).transpose()?;
        Ok((net, head))
    }
}
