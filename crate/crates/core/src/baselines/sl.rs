//! Split learning: the encoder side of the model travels from client to
//! client; the decision side stays on the server. Each client trains on its
//! shard against the server, then hands its encoder weights to the next.

use std::collections::BTreeMap;

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::protocol::{epoch_batches, evaluate, InlSystem, MetricsRow, Split, TrainConfig};
use crate::rng;

/// The model split into a client side (every non-decision node) and a
/// server side (the decision node and its auxiliary decoders).
#[derive(Debug, Clone)]
pub struct SlState {
    system: InlSystem,
}

/// Weights as they travel between clients: little-endian f64 bytes.
pub fn handoff(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn receive(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Shape(format!("{} bytes is not a whole number of f64 values", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

/// Seed for client `c`; client 0 uses the run seed itself, so a single
/// client reproduces plain training exactly.
fn client_seed(seed: u64, c: usize) -> u64 {
    if c == 0 {
        seed
    } else {
        rng::derive_seed(seed, "sl-client", c as u64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlEpochStats {
    pub objective_sum: f64,
    pub correct: usize,
    pub samples: usize,
    pub activation_bits: u64,
    pub handoff_bits: u64,
}

impl SlState {
    /// The client side must consist of sources wired straight to the server.
    pub fn new(system: InlSystem) -> Result<Self> {
        let n = system.dag().decision_node();
        if !system.dag().relays().is_empty() || system.dag().edges().iter().any(|e| e.to != n) {
            return Err(Error::Graph("split learning needs every client-side node wired to the server".into()));
        }
        Ok(Self { system })
    }

    pub fn system(&self) -> &InlSystem {
        &self.system
    }

    pub fn into_system(self) -> InlSystem {
        self.system
    }

    fn client_nodes(&self) -> Vec<usize> {
        let n = self.system.dag().decision_node();
        self.system.models().keys().copied().filter(|&k| k != n).collect()
    }

    pub fn client_params(&self) -> Vec<f64> {
        self.client_nodes().into_iter().flat_map(|k| self.system.node_params(k).expect("model exists")).collect()
    }

    pub fn set_client_params(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize = self.client_nodes().iter().map(|&k| self.system.node_param_count(k)).sum();
        if params.len() != expected {
            return Err(Error::Shape(format!("client side holds {expected} parameters, got {}", params.len())));
        }
        let mut off = 0;
        for k in self.client_nodes() {
            let len = self.system.node_param_count(k);
            self.system.set_node_params(k, &params[off..off + len])?;
            off += len;
        }
        Ok(())
    }

    pub fn client_param_count(&self) -> usize {
        self.client_nodes().iter().map(|&k| self.system.node_param_count(k)).sum()
    }

    /// Clients in order: each receives the encoder weights, trains on its
    /// shard against the server and passes the weights on. The last
    /// handoff returns the weights to the first client for the next epoch.
    pub fn sl_epoch(&mut self, shards: &[MultiViewDataset], cfg: &TrainConfig, epoch: usize) -> Result<SlEpochStats> {
        let nodes = self.system.source_nodes();
        let mut st = SlEpochStats::default();
        for (c, shard) in shards.iter().enumerate() {
            if shard.num_views() != nodes.len() {
                return Err(Error::Shape(format!(
                    "client {c} holds {} views for {} encoders",
                    shard.num_views(),
                    nodes.len()
                )));
            }
            let seed = client_seed(cfg.seed, c);
            let mut noise = rng::stream(seed, "noise", epoch as u64);
            for idx in epoch_batches(shard.len(), cfg.batch_size, seed, epoch) {
                let step = self.system.train_step(
                    &shard.batch(&nodes, &idx)?,
                    &shard.labels_at(&idx),
                    cfg,
                    Some(&mut noise),
                )?;
                st.objective_sum += step.objective * step.samples as f64;
                st.correct += step.correct;
                st.samples += step.samples;
                st.activation_bits += step.bits;
            }
            let sent = self.client_params();
            st.handoff_bits += sent.len() as u64 * cfg.bits_per_value as u64;
            let bytes = handoff(&sent);
            let received = receive(&bytes)?;
            self.set_client_params(&received)?;
        }
        Ok(st)
    }
}

pub fn train_sl(
    state: &mut SlState,
    train_set: &MultiViewDataset,
    test_set: Option<&MultiViewDataset>,
    clients: usize,
    cfg: &TrainConfig,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if clients == 0 || clients > train_set.len() {
        return Err(Error::InvalidArgument(format!("{clients} clients for {} samples", train_set.len())));
    }
    let shards = train_set.shards(clients);
    let mut rows = Vec::new();
    let mut cumulative = 0u64;
    for epoch in 1..=cfg.epochs {
        let st = state.sl_epoch(&shards, cfg, epoch)?;
        cumulative += st.activation_bits + st.handoff_bits;
        rows.push(MetricsRow {
            epoch,
            split: Split::Train,
            loss: -st.objective_sum / st.samples as f64,
            accuracy: st.correct as f64 / st.samples as f64,
            cumulative_bits: cumulative,
        });
        if let Some(test) = test_set {
            let (loss, accuracy) = evaluate(&state.system, test)?;
            rows.push(MetricsRow { epoch, split: Split::Test, loss, accuracy, cumulative_bits: cumulative });
        }
    }
    Ok(rows)
}

/// Parameter counts on each side, for reporting.
pub fn split_sizes(state: &SlState) -> BTreeMap<&'static str, usize> {
    let client = state.client_param_count();
    BTreeMap::from([("client", client), ("server", state.system.num_params() - client)])
}
