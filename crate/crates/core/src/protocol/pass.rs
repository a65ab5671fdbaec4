//! One minibatch through the graph: forward with concatenation of incoming
//! vectors, backward with the input-layer error split back per sender.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::loss::{nll_output_delta, weighted_objective, LatentState};
use super::model::InlSystem;
use crate::error::{shape_err, Error, Result};
use crate::graph::message_bits;
use crate::nn::{sample_latent, LayerGrads};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// What crosses one edge in one direction for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub direction: Direction,
    pub payload: Tensor,
    pub bits: u64,
}

impl Message {
    fn new(from: usize, to: usize, direction: Direction, payload: Tensor, bits_per_value: u32) -> Self {
        let bits = message_bits(payload.cols(), payload.rows(), bits_per_value);
        Self { from, to, direction, payload, bits }
    }
}

/// Latent noise source for the forward pass.
pub enum Noise<'a> {
    /// `ε ≡ 0`: every latent equals its mean.
    Zero,
    Sample(&'a mut Rng),
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Decision node soft output, `[batch × |Y|]`.
    pub probs: Tensor,
    /// Auxiliary decoder outputs per source (star objective only).
    pub aux_probs: BTreeMap<usize, Tensor>,
    /// What each non-decision node sent downstream.
    pub emitted: BTreeMap<usize, Tensor>,
    pub latents: BTreeMap<usize, LatentState>,
    pub messages: Vec<Message>,
}

impl ForwardOutput {
    pub fn bits(&self) -> u64 {
        self.messages.iter().map(|m| m.bits).sum()
    }
}

#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub grads: BTreeMap<usize, Vec<LayerGrads>>,
    pub aux_grads: BTreeMap<usize, Vec<LayerGrads>>,
    /// Per node: the error vector at its input layer, before splitting.
    pub delta_in: BTreeMap<usize, Tensor>,
    /// Per node: the summed gradient it received w.r.t. the vector it emitted.
    pub received: BTreeMap<usize, Tensor>,
    pub messages: Vec<Message>,
}

impl BackwardOutput {
    pub fn bits(&self) -> u64 {
        self.messages.iter().map(|m| m.bits).sum()
    }
}

impl InlSystem {
    fn check_batch(&self, batch: &BTreeMap<usize, Tensor>) -> Result<usize> {
        if batch.keys().ne(self.dag.sources().iter()) {
            return Err(Error::InvalidArgument(format!(
                "batch must hold exactly the sources {:?}",
                self.dag.sources()
            )));
        }
        let mut rows = None;
        for (j, x) in batch {
            if x.shape().len() != 2 || x.cols() != self.input_dims[j] {
                return shape_err(format!(
                    "source {j}: batch shape {:?}, expected width {}",
                    x.shape(),
                    self.input_dims[j]
                ));
            }
            match rows {
                None => rows = Some(x.rows()),
                Some(r) if r != x.rows() => return shape_err("batch sizes differ across sources"),
                _ => {}
            }
        }
        match rows {
            Some(r) if r > 0 => Ok(r),
            _ => Err(Error::InvalidArgument("empty batch".into())),
        }
    }

    /// Concatenated input at node `k`: own observation first, then senders in
    /// ascending id order.
    fn node_input(
        &self,
        k: usize,
        batch: &BTreeMap<usize, Tensor>,
        emitted: &BTreeMap<usize, Tensor>,
    ) -> Result<Tensor> {
        let mut parts: Vec<&Tensor> = Vec::new();
        if let Some(x) = batch.get(&k) {
            parts.push(x);
        }
        for i in self.dag.in_neighbors(k) {
            parts.push(&emitted[i]);
        }
        Tensor::concat_cols(&parts)
    }

    /// Widths of the blocks in node `k`'s concatenated input.
    fn input_widths(&self, k: usize) -> Vec<usize> {
        let mut w = Vec::new();
        if let Some(&d) = self.input_dims.get(&k) {
            w.push(d);
        }
        for i in self.dag.in_neighbors(k) {
            w.push(self.models[i].emitted_dim());
        }
        w
    }

    /// Run every node in topological order, caching activations for the
    /// backward pass. Noise is drawn node by node in that order.
    pub fn forward_pass(
        &mut self,
        batch: &BTreeMap<usize, Tensor>,
        mut noise: Noise,
        bits_per_value: u32,
    ) -> Result<ForwardOutput> {
        self.check_batch(batch)?;
        let n = self.dag.decision_node();
        let mut emitted = BTreeMap::new();
        let mut latents = BTreeMap::new();
        let mut messages = Vec::new();
        let mut probs = None;
        let order = self.dag.topo_order().to_vec();
        for k in order {
            let input = self.node_input(k, batch, &emitted)?;
            let model = self.models.get_mut(&k).expect("validated");
            let out = model.net.forward(&input)?;
            if k == n {
                out.ensure_finite("decision output")?;
                probs = Some(out);
                continue;
            }
            let sent = match model.head {
                Some(head) => {
                    let (mu, logvar) = head.split(&out)?;
                    let eps = match &mut noise {
                        Noise::Zero => Tensor::zeros(mu.shape()),
                        Noise::Sample(r) => {
                            let data = (0..mu.len()).map(|_| StandardNormal.sample(&mut **r)).collect();
                            Tensor::new(mu.shape().to_vec(), data)?
                        }
                    };
                    let u = sample_latent(&mu, &logvar, &eps)?;
                    latents.insert(k, LatentState { u: u.clone(), mu, logvar });
                    u
                }
                None => out,
            };
            sent.ensure_finite("node output")?;
            for &t in self.dag.out_neighbors(k) {
                messages.push(Message::new(k, t, Direction::Forward, sent.clone(), bits_per_value));
            }
            emitted.insert(k, sent);
        }
        let mut aux_probs = BTreeMap::new();
        for (j, a) in self.aux.iter_mut() {
            aux_probs.insert(*j, a.forward(&emitted[j])?);
        }
        Ok(ForwardOutput { probs: probs.expect("decision node ran"), aux_probs, emitted, latents, messages })
    }

    /// The objective value (to be maximized) for a completed forward pass.
    pub fn objective_value(&self, fwd: &ForwardOutput, labels: &[usize], s: f64) -> Result<f64> {
        let coefs = self.ratio_coefficients();
        weighted_objective(&fwd.probs, &fwd.aux_probs, labels, &fwd.latents, &coefs, s)
    }

    /// Multiples of `s` applied to each headed source's log-ratio.
    pub fn ratio_coefficients(&self) -> BTreeMap<usize, f64> {
        self.models
            .iter()
            .filter(|(_, m)| m.head.is_some())
            .map(|(&k, _)| (k, self.objective.ratio_coefficient(k)))
            .collect()
    }

    /// Per-sample gradients of the negated objective w.r.t. the decision
    /// output and each auxiliary decoder's output.
    pub fn output_deltas(
        &self,
        fwd: &ForwardOutput,
        labels: &[usize],
        s: f64,
    ) -> Result<(Tensor, BTreeMap<usize, Tensor>)> {
        let main = nll_output_delta(&fwd.probs, labels, 1.0)?;
        let mut aux = BTreeMap::new();
        for (&j, q) in &fwd.aux_probs {
            aux.insert(j, nll_output_delta(q, labels, s)?);
        }
        Ok((main, aux))
    }

    /// Backward pass in reverse topological order. The decision node starts
    /// from `decision_delta` alone; every other node starts from the sum of
    /// the sub-vectors its receivers sent back, plus its own log-ratio term.
    pub fn backward_pass(
        &self,
        fwd: &ForwardOutput,
        decision_delta: &Tensor,
        aux_deltas: &BTreeMap<usize, Tensor>,
        s: f64,
        bits_per_value: u32,
    ) -> Result<BackwardOutput> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("s must be non-negative, got {s}")));
        }
        if aux_deltas.keys().ne(self.aux.keys()) {
            return Err(Error::InvalidArgument("one error vector per auxiliary decoder is required".into()));
        }
        let n = self.dag.decision_node();
        let mut received: BTreeMap<usize, Tensor> = BTreeMap::new();
        let mut grads = BTreeMap::new();
        let mut aux_grads = BTreeMap::new();
        let mut delta_ins = BTreeMap::new();
        let mut messages = Vec::new();

        // auxiliary decoders sit at the decision node; their input errors go
        // to the same sources as the main split
        let mut aux_back: BTreeMap<usize, Tensor> = BTreeMap::new();
        for (j, a) in &self.aux {
            let b = a.backward_from_delta(&aux_deltas[j])?;
            aux_grads.insert(*j, b.grads);
            aux_back.insert(*j, b.delta_in);
        }

        for &k in self.dag.topo_order().iter().rev() {
            let model = &self.models[&k];
            let delta_out = if k == n {
                decision_delta.clone()
            } else {
                let g = received
                    .remove(&k)
                    .ok_or_else(|| Error::ProtocolOrder(format!("node {k} received no error vector")))?;
                let out = match (&model.head, fwd.latents.get(&k)) {
                    (Some(head), Some(lat)) => {
                        let coef = s * self.objective.ratio_coefficient(k);
                        head.output_delta(&lat.u, &lat.mu, &lat.logvar, &g, coef)?
                    }
                    (Some(_), None) => return Err(Error::ProtocolOrder(format!("no latent cached for node {k}"))),
                    _ => g.clone(),
                };
                received.insert(k, g);
                out
            };
            let b = model.net.backward_from_delta(&delta_out)?;
            let parts = b.delta_in.split_cols(&self.input_widths(k))?;
            let skip = usize::from(self.dag.is_source(k));
            for (&i, part) in self.dag.in_neighbors(k).iter().zip(parts.into_iter().skip(skip)) {
                let mut part = part;
                if k == n {
                    if let Some(extra) = aux_back.get(&i) {
                        part.add_assign(extra)?;
                    }
                }
                messages.push(Message::new(k, i, Direction::Backward, part.clone(), bits_per_value));
                match received.get_mut(&i) {
                    Some(acc) => acc.add_assign(&part)?,
                    None => {
                        received.insert(i, part);
                    }
                }
            }
            grads.insert(k, b.grads);
            delta_ins.insert(k, b.delta_in);
        }
        Ok(BackwardOutput { grads, aux_grads, delta_in: delta_ins, received, messages })
    }

    /// Apply one SGD step everywhere.
    pub fn apply_gradients(&mut self, back: &BackwardOutput, eta: f64) -> Result<()> {
        for (k, m) in self.models.iter_mut() {
            let g = back.grads.get(k).ok_or_else(|| Error::ProtocolOrder(format!("no gradients for node {k}")))?;
            m.net.apply_sgd(g, eta)?;
        }
        for (j, a) in self.aux.iter_mut() {
            let g = back
                .aux_grads
                .get(j)
                .ok_or_else(|| Error::ProtocolOrder(format!("no gradients for auxiliary decoder {j}")))?;
            a.apply_sgd(g, eta)?;
        }
        Ok(())
    }

    /// Deterministic soft output: every latent set to its mean. Leaves caches
    /// untouched.
    pub fn infer(&self, batch: &BTreeMap<usize, Tensor>) -> Result<Tensor> {
        self.check_batch(batch)?;
        let n = self.dag.decision_node();
        let mut emitted = BTreeMap::new();
        for &k in self.dag.topo_order() {
            let input = self.node_input(k, batch, &emitted)?;
            let model = &self.models[&k];
            let out = model.net.predict(&input)?;
            if k == n {
                out.ensure_finite("decision output")?;
                return Ok(out);
            }
            let sent = match model.head {
                Some(head) => head.split(&out)?.0,
                None => out,
            };
            emitted.insert(k, sent);
        }
        unreachable!("the decision node is last in topological order")
    }
}
