//! Minibatch training loop, evaluation and relevance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::InlSystem;
use super::pass::Noise;
use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::nn::log_loss;
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

fn default_bits() -> u32 {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Lagrange multiplier on the rate terms.
    pub s: f64,
    /// Learning rate.
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Zero latent noise (every latent equals its mean) during training.
    #[serde(default)]
    pub deterministic_latent: bool,
    /// Bits per transmitted activation or parameter.
    #[serde(default = "default_bits")]
    pub bits_per_value: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            s: 0.01,
            eta: 0.02,
            batch_size: 32,
            epochs: 50,
            seed: 1,
            deterministic_latent: false,
            bits_per_value: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 0.0) || !self.s.is_finite() {
            return Err(Error::InvalidArgument(format!("s must be non-negative, got {}", self.s)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One emitted metrics line. `loss` is the minimized training objective on
/// train rows and the mean log-loss (nats) on test rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
    pub cumulative_bits: u64,
}

pub const METRICS_HEADER: &str = "epoch,split,loss,accuracy,cumulative_bits";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.epoch, r.split.as_str(), r.loss, r.accuracy, r.cumulative_bits)
            .expect("writing to a String");
    }
    out
}

/// First test row at or above `target` accuracy.
pub fn first_reaching(rows: &[MetricsRow], target: f64) -> Option<&MetricsRow> {
    rows.iter().find(|r| r.split == Split::Test && r.accuracy >= target)
}

/// Shuffled minibatch index lists for one epoch.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Mean objective over the batch (the maximized quantity).
    pub objective: f64,
    pub correct: usize,
    pub samples: usize,
    /// Forward plus backward bits exchanged.
    pub bits: u64,
}

impl InlSystem {
    /// forward → objective → backward → SGD at every node.
    pub fn train_step(
        &mut self,
        batch: &BTreeMap<usize, Tensor>,
        labels: &[usize],
        cfg: &TrainConfig,
        noise: Option<&mut Rng>,
    ) -> Result<StepStats> {
        let noise = match (noise, cfg.deterministic_latent) {
            (Some(r), false) => Noise::Sample(r),
            _ => Noise::Zero,
        };
        let fwd = self.forward_pass(batch, noise, cfg.bits_per_value)?;
        let objective = self.objective_value(&fwd, labels, cfg.s)?;
        let (d, aux) = self.output_deltas(&fwd, labels, cfg.s)?;
        let back = self.backward_pass(&fwd, &d, &aux, cfg.s, cfg.bits_per_value)?;
        for (k, g) in &back.grads {
            for l in g {
                if !l.weights.all_finite() || !l.biases.all_finite() {
                    return Err(Error::NonFinite(format!("gradient at node {k}")));
                }
            }
        }
        self.apply_gradients(&back, cfg.eta)?;
        let correct = fwd.probs.argmax_rows().iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(StepStats { objective, correct, samples: labels.len(), bits: fwd.bits() + back.bits() })
    }

    /// View `v` of a dataset feeds the `v`-th source in ascending id order.
    pub fn source_nodes(&self) -> Vec<usize> {
        self.dag.sources().iter().copied().collect()
    }

    fn warn_on_capacity(&self, bits_per_value: u32) {
        for e in self.dag.edges() {
            let per_sample = self.models[&e.from].emitted_dim() as f64 * bits_per_value as f64;
            if per_sample > e.capacity {
                log::warn!(
                    "edge ({}, {}) carries {per_sample} bits per sample, above its capacity {}",
                    e.from,
                    e.to,
                    e.capacity
                );
            }
        }
    }
}

/// Mean log-loss (nats) and accuracy of deterministic inference.
pub fn evaluate(system: &InlSystem, data: &MultiViewDataset) -> Result<(f64, f64)> {
    let nodes = system.source_nodes();
    let mut loss = 0.0;
    let mut correct = 0;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(1024) {
        let probs = system.infer(&data.batch(&nodes, chunk)?)?;
        for (r, &i) in chunk.iter().enumerate() {
            let y = data.labels[i];
            loss += log_loss(y, probs.row(r))?;
        }
        correct += probs.argmax_rows().iter().zip(chunk).filter(|(p, &i)| **p == data.labels[i]).count();
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Train for `cfg.epochs` epochs; one train row and (if a test set is given)
/// one test row per epoch.
pub fn train(
    system: &mut InlSystem,
    train_set: &MultiViewDataset,
    test_set: Option<&MultiViewDataset>,
    cfg: &TrainConfig,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if train_set.num_views() != system.dag.sources().len() {
        return Err(Error::InvalidArgument(format!(
            "{} views for {} sources",
            train_set.num_views(),
            system.dag.sources().len()
        )));
    }
    system.warn_on_capacity(cfg.bits_per_value);
    let nodes = system.source_nodes();
    let mut rows = Vec::new();
    let mut cumulative = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut noise = rng::stream(cfg.seed, "noise", epoch as u64);
        let (mut obj, mut correct, mut seen) = (0.0, 0, 0);
        for (b, idx) in epoch_batches(train_set.len(), cfg.batch_size, cfg.seed, epoch).iter().enumerate() {
            let batch = train_set.batch(&nodes, idx)?;
            let labels = train_set.labels_at(idx);
            let st = system.train_step(&batch, &labels, cfg, Some(&mut noise)).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, batch {b})")),
                other => other,
            })?;
            obj += st.objective * st.samples as f64;
            correct += st.correct;
            seen += st.samples;
            cumulative += st.bits;
        }
        rows.push(MetricsRow {
            epoch,
            split: Split::Train,
            loss: -obj / seen as f64,
            accuracy: correct as f64 / seen as f64,
            cumulative_bits: cumulative,
        });
        if let Some(test) = test_set {
            let (loss, accuracy) = evaluate(system, test)?;
            rows.push(MetricsRow { epoch, split: Split::Test, loss, accuracy, cumulative_bits: cumulative });
        }
        log::debug!("epoch {epoch}: {:?}", rows.last());
    }
    system.clear_caches();
    Ok(rows)
}

/// `Δ = H(Y) − mean log-loss`, in nats.
pub fn relevance(probs: &Tensor, labels: &[usize], label_prior: &[f64]) -> Result<f64> {
    if probs.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!("{} labels for {} predictions", labels.len(), probs.rows())));
    }
    if label_prior.iter().any(|p| !(*p >= 0.0)) || (label_prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Distribution("label prior must be a probability vector".into()));
    }
    let h: f64 = label_prior.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if label_prior.get(y).is_none_or(|&p| p == 0.0) {
            return Err(Error::InvalidArgument(format!("label {y} outside the prior's support")));
        }
        loss += log_loss(y, probs.row(r))?;
    }
    Ok(h - loss / labels.len() as f64)
}
