//! The whole graph flattened into one feedforward network.
//!
//! Every node's layers are laid out as diagonal blocks of a single stack of
//! wide layers. A signal that is produced before it is consumed is carried
//! forward through identity rows. Latent heads contribute only their mean
//! rows, so the flattened network equals the distributed one when every
//! latent is set to its mean.
//!
//! Forward and backward here are written independently of the per-node
//! engine so the two can check each other.

use std::collections::BTreeMap;

use super::model::NodeModel;
use crate::error::{shape_err, Error, Result};
use crate::graph::DagNetwork;
use crate::nn::{Activation, LayerGrads};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Signal {
    Input(usize),
    Hidden(usize, usize),
    Output(usize),
}

impl Signal {
    fn key(self) -> (usize, usize) {
        match self {
            Signal::Input(k) => (k, 0),
            Signal::Hidden(k, l) => (k, l),
            Signal::Output(k) => (k, usize::MAX),
        }
    }
}

#[derive(Debug, Clone)]
struct Segment {
    start: usize,
    len: usize,
    act: Activation,
}

#[derive(Debug, Clone)]
struct WideLayer {
    in_dim: usize,
    out_dim: usize,
    /// `[out × in]` row-major.
    w: Vec<f64>,
    b: Vec<f64>,
    segments: Vec<Segment>,
}

/// Where one node layer lives inside the flattened stack.
#[derive(Debug, Clone)]
struct Block {
    t: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Rows of the node layer that are not represented (log-variance rows).
    full_rows: usize,
}

#[derive(Debug, Clone)]
pub struct MonolithicNet {
    layers: Vec<WideLayer>,
    blocks: BTreeMap<usize, Vec<Block>>,
    sources: Vec<usize>,
}

impl MonolithicNet {
    /// Flatten the given node models. Fails exactly when some node's first
    /// layer does not match what its inputs provide.
    pub fn build(
        dag: &DagNetwork,
        models: &BTreeMap<usize, NodeModel>,
        input_dims: &BTreeMap<usize, usize>,
    ) -> Result<Self> {
        let n = dag.decision_node();
        let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
        let mut width: BTreeMap<Signal, usize> = BTreeMap::new();
        let mut avail: BTreeMap<Signal, usize> = BTreeMap::new();
        let mut last_use: BTreeMap<Signal, usize> = BTreeMap::new();
        let mut inputs: BTreeMap<usize, Vec<Signal>> = BTreeMap::new();

        for &k in dag.topo_order() {
            let m = models.get(&k).ok_or_else(|| Error::Compat(format!("node {k}: no model")))?;
            let mut ins = Vec::new();
            if dag.is_source(k) {
                let d = *input_dims.get(&k).ok_or_else(|| Error::Compat(format!("node {k}: no input dimension")))?;
                width.insert(Signal::Input(k), d);
                avail.insert(Signal::Input(k), 0);
                ins.push(Signal::Input(k));
            }
            ins.extend(dag.in_neighbors(k).iter().map(|&i| Signal::Output(i)));
            let start = ins.iter().map(|s| avail[s]).max().unwrap_or(0);
            let provided: usize = ins.iter().map(|s| width[s]).sum();
            if provided != m.net.in_dim() {
                return Err(Error::Compat(format!(
                    "node {k}: first layer {}, inputs provide {provided}",
                    m.net.in_dim()
                )));
            }
            for s in &ins {
                let u = last_use.entry(*s).or_insert(start);
                *u = (*u).max(start);
            }
            let layers = m.net.layers();
            for l in 1..layers.len() {
                let s = Signal::Hidden(k, l);
                width.insert(s, layers[l - 1].out_dim());
                avail.insert(s, start + l);
                last_use.insert(s, start + l);
            }
            let out = Signal::Output(k);
            width.insert(out, if let Some(h) = m.head { h.latent_dim() } else { m.net.out_dim() });
            avail.insert(out, start + layers.len());
            depth.insert(k, start);
            inputs.insert(k, ins);
        }
        let total = avail[&Signal::Output(n)];
        last_use.insert(Signal::Output(n), total);

        // state t: every signal alive at t, ordered by (node, position)
        let states: Vec<Vec<Signal>> = (0..=total)
            .map(|t| {
                let mut s: Vec<Signal> = avail
                    .iter()
                    .filter(|(sig, &a)| a <= t && last_use.get(sig).is_some_and(|&u| t <= u))
                    .map(|(s, _)| *s)
                    .collect();
                s.sort_by_key(|s| s.key());
                s
            })
            .collect();
        let offsets: Vec<BTreeMap<Signal, usize>> = states
            .iter()
            .map(|st| {
                let mut off = 0;
                st.iter()
                    .map(|s| {
                        let o = off;
                        off += width[s];
                        (*s, o)
                    })
                    .collect()
            })
            .collect();
        let state_width = |t: usize| states[t].iter().map(|s| width[s]).sum::<usize>();

        let mut layers = Vec::with_capacity(total);
        let mut blocks: BTreeMap<usize, Vec<Block>> = BTreeMap::new();
        for t in 0..total {
            let (in_dim, out_dim) = (state_width(t), state_width(t + 1));
            let mut w = vec![0.0; out_dim * in_dim];
            let mut b = vec![0.0; out_dim];
            let mut segments = Vec::new();
            for sig in &states[t + 1] {
                let row0 = offsets[t + 1][sig];
                let len = width[sig];
                if avail[sig] <= t {
                    // carried unchanged
                    let col0 = offsets[t][sig];
                    for i in 0..len {
                        w[(row0 + i) * in_dim + col0 + i] = 1.0;
                    }
                    segments.push(Segment { start: row0, len, act: Activation::Linear });
                    continue;
                }
                let (k, l) = match *sig {
                    Signal::Hidden(k, l) => (k, l - 1),
                    Signal::Output(k) => (k, models[&k].net.layers().len() - 1),
                    Signal::Input(_) => unreachable!("inputs are available at t = 0"),
                };
                debug_assert_eq!(depth[&k] + l, t);
                let layer = &models[&k].net.layers()[l];
                let cols: Vec<usize> = if l == 0 {
                    inputs[&k]
                        .iter()
                        .flat_map(|s| {
                            let o = offsets[t][s];
                            o..o + width[s]
                        })
                        .collect()
                } else {
                    let o = offsets[t][&Signal::Hidden(k, l)];
                    (o..o + layer.in_dim()).collect()
                };
                let rows: Vec<usize> = (row0..row0 + len).collect();
                let lw = layer.weights().data();
                for (r, &row) in rows.iter().enumerate() {
                    for (c, &col) in cols.iter().enumerate() {
                        w[row * in_dim + col] = lw[r * layer.in_dim() + c];
                    }
                    b[row] = layer.biases().data()[r];
                }
                segments.push(Segment { start: row0, len, act: layer.activation() });
                blocks.entry(k).or_default().push(Block { t, rows, cols, full_rows: layer.out_dim() });
            }
            layers.push(WideLayer { in_dim, out_dim, w, b, segments });
        }
        for v in blocks.values_mut() {
            v.sort_by_key(|b| b.t);
        }
        Ok(Self { layers, blocks, sources: dag.sources().iter().copied().collect() })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn stack_input(&self, batch: &BTreeMap<usize, Tensor>) -> Result<Tensor> {
        let parts: Vec<&Tensor> = self
            .sources
            .iter()
            .map(|j| batch.get(j).ok_or_else(|| Error::InvalidArgument(format!("no data for source {j}"))))
            .collect::<Result<_>>()?;
        let x = Tensor::concat_cols(&parts)?;
        if x.cols() != self.layers[0].in_dim {
            return shape_err(format!("input width {} does not match {}", x.cols(), self.layers[0].in_dim));
        }
        Ok(x)
    }

    /// Returns every activation; the last one is the soft output.
    fn run(&self, x: &Tensor) -> Vec<Vec<Vec<f64>>> {
        let mut acts: Vec<Vec<Vec<f64>>> = vec![(0..x.rows()).map(|r| x.row(r).to_vec()).collect()];
        for layer in &self.layers {
            let prev = acts.last().expect("non-empty");
            let next = prev
                .iter()
                .map(|a| {
                    let mut z: Vec<f64> = (0..layer.out_dim)
                        .map(|o| {
                            let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                            layer.b[o] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>()
                        })
                        .collect();
                    for seg in &layer.segments {
                        squash(seg.act, &mut z[seg.start..seg.start + seg.len]);
                    }
                    z
                })
                .collect();
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, batch: &BTreeMap<usize, Tensor>) -> Result<Tensor> {
        let x = self.stack_input(batch)?;
        let acts = self.run(&x);
        Tensor::from_rows(acts.last().expect("non-empty"))
    }

    /// Mean cross-entropy gradients, mapped back onto each node's layers.
    /// Log-variance rows of latent heads get zero gradient.
    pub fn gradients(
        &self,
        batch: &BTreeMap<usize, Tensor>,
        labels: &[usize],
    ) -> Result<BTreeMap<usize, Vec<LayerGrads>>> {
        let x = self.stack_input(batch)?;
        if labels.len() != x.rows() {
            return shape_err("label count does not match batch");
        }
        let acts = self.run(&x);
        let bsz = x.rows();
        // δ at the output pre-activation: p − e_y for softmax + cross-entropy
        let mut delta: Vec<Vec<f64>> = acts
            .last()
            .expect("non-empty")
            .iter()
            .zip(labels)
            .map(|(p, &y)| {
                let mut d = p.clone();
                d[y] -= 1.0;
                d
            })
            .collect();
        let mut wide_grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for (t, layer) in self.layers.iter().enumerate().rev() {
            if t + 1 < self.layers.len() {
                // δ currently holds ∂ℓ/∂a; turn it into ∂ℓ/∂z
                for (d, a) in delta.iter_mut().zip(&acts[t + 1]) {
                    for seg in &layer.segments {
                        let r = seg.start..seg.start + seg.len;
                        squash_grad(seg.act, &a[r.clone()], &mut d[r]);
                    }
                }
            }
            let mut gw = vec![0.0; layer.out_dim * layer.in_dim];
            let mut gb = vec![0.0; layer.out_dim];
            for (d, a) in delta.iter().zip(&acts[t]) {
                for o in 0..layer.out_dim {
                    gb[o] += d[o] / bsz as f64;
                    for i in 0..layer.in_dim {
                        gw[o * layer.in_dim + i] += d[o] * a[i] / bsz as f64;
                    }
                }
            }
            wide_grads[t] = (gw, gb);
            delta = delta
                .iter()
                .map(|d| {
                    (0..layer.in_dim)
                        .map(|i| (0..layer.out_dim).map(|o| layer.w[o * layer.in_dim + i] * d[o]).sum())
                        .collect()
                })
                .collect();
        }

        let mut out = BTreeMap::new();
        for (&k, blocks) in &self.blocks {
            let grads = blocks
                .iter()
                .map(|blk| {
                    let layer = &self.layers[blk.t];
                    let (gw, gb) = &wide_grads[blk.t];
                    let mut w = Tensor::zeros(&[blk.full_rows, blk.cols.len()]);
                    let mut b = Tensor::zeros(&[blk.full_rows]);
                    for (r, &row) in blk.rows.iter().enumerate() {
                        for (c, &col) in blk.cols.iter().enumerate() {
                            w.set(r, c, gw[row * layer.in_dim + col]);
                        }
                        b.data_mut()[r] = gb[row];
                    }
                    LayerGrads { weights: w, biases: b }
                })
                .collect();
            out.insert(k, grads);
        }
        Ok(out)
    }
}

fn squash(act: Activation, z: &mut [f64]) {
    match act {
        Activation::Linear => {}
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Softmax => {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            z.iter_mut().for_each(|v| *v = (*v - m).exp() / s);
        }
    }
}

/// In place: gradient w.r.t. activations → gradient w.r.t. pre-activations,
/// using only the activations.
fn squash_grad(act: Activation, a: &[f64], g: &mut [f64]) {
    match act {
        Activation::Linear => {}
        // a > 0 exactly when z > 0
        Activation::Relu => g.iter_mut().zip(a).for_each(|(g, &a)| {
            if a <= 0.0 {
                *g = 0.0
            }
        }),
        Activation::Sigmoid => g.iter_mut().zip(a).for_each(|(g, &a)| *g *= a * (1.0 - a)),
        Activation::Tanh => g.iter_mut().zip(a).for_each(|(g, &a)| *g *= 1.0 - a * a),
        Activation::Softmax => {
            let dot: f64 = g.iter().zip(a).map(|(g, a)| g * a).sum();
            g.iter_mut().zip(a).for_each(|(g, &a)| *g = a * (*g - dot));
        }
    }
}

/// Largest entry-wise difference between two gradient sets, relative to the
/// largest entry of `reference` in the same layer.
pub fn max_relative_error(
    got: &BTreeMap<usize, Vec<LayerGrads>>,
    reference: &BTreeMap<usize, Vec<LayerGrads>>,
) -> Result<f64> {
    if got.keys().ne(reference.keys()) {
        return Err(Error::InvalidArgument("gradient sets cover different nodes".into()));
    }
    let mut worst: f64 = 0.0;
    for (k, gs) in got {
        let rs = &reference[k];
        if gs.len() != rs.len() {
            return shape_err(format!("node {k}: {} vs {} layers", gs.len(), rs.len()));
        }
        for (g, r) in gs.iter().zip(rs) {
            if g.weights.shape() != r.weights.shape() || g.biases.shape() != r.biases.shape() {
                return shape_err(format!("node {k}: gradient shapes differ"));
            }
            let pairs =
                g.weights.data().iter().chain(g.biases.data()).zip(r.weights.data().iter().chain(r.biases.data()));
            let scale = r.weights.data().iter().chain(r.biases.data()).fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = pairs.fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if diff > 0.0 {
                worst = worst.max(if scale > 0.0 { diff / scale } else { f64::INFINITY });
            }
        }
    }
    Ok(worst)
}
