//! Federated learning: every client trains a full replica on its own shard,
//! then the replicas are averaged parameter by parameter.

use std::thread;

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::nn::{Activation, FeedForwardNet};
use crate::protocol::{epoch_batches, evaluate, InlSystem, MetricsRow, Split, TrainConfig};
use crate::rng;

/// A model that can be flattened to and restored from a parameter vector.
pub trait Replica: Clone + Send + Sync {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// Two replicas can be averaged only if their layouts agree.
    fn layout(&self) -> Vec<(usize, usize, Activation)>;
}

impl Replica for FeedForwardNet {
    fn params(&self) -> Vec<f64> {
        FeedForwardNet::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        FeedForwardNet::set_params(self, params)
    }

    fn layout(&self) -> Vec<(usize, usize, Activation)> {
        self.signature()
    }
}

impl Replica for InlSystem {
    fn params(&self) -> Vec<f64> {
        InlSystem::params(self)
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        InlSystem::set_params(self, params)
    }

    fn layout(&self) -> Vec<(usize, usize, Activation)> {
        let mut out = Vec::new();
        for m in self.models().values() {
            out.extend(m.net.signature());
        }
        for a in self.aux_decoders().values() {
            out.extend(a.signature());
        }
        out
    }
}

/// Unweighted parameter mean.
pub fn aggregate<R: Replica>(replicas: &[R]) -> Result<Vec<f64>> {
    let Some(first) = replicas.first() else {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    };
    let layout = first.layout();
    if replicas.iter().any(|r| r.layout() != layout) {
        return Err(Error::Shape("replicas do not share one architecture".into()));
    }
    // offsets from the first replica, so identical replicas average to
    // themselves bit for bit
    let base = first.params();
    let mut offset = vec![0.0; base.len()];
    for r in &replicas[1..] {
        for ((o, p), b) in offset.iter_mut().zip(r.params()).zip(&base) {
            *o += p - b;
        }
    }
    let k = replicas.len() as f64;
    Ok(base.iter().zip(&offset).map(|(b, o)| b + o / k).collect())
}

/// One round: each client copies the global model, runs `local` on its
/// shard, and the results are averaged into the new global model. Clients
/// run on separate threads when `parallel` is set; the result does not
/// depend on it.
pub fn fl_round<R, D, S, F>(global: &R, shards: &[D], parallel: bool, local: F) -> Result<(R, Vec<S>)>
where
    R: Replica,
    D: Sync,
    S: Send,
    F: Fn(usize, &mut R, &D) -> Result<S> + Sync,
{
    let run = |c: usize, shard: &D| -> Result<(R, S)> {
        let mut replica = global.clone();
        let stats = local(c, &mut replica, shard)?;
        Ok((replica, stats))
    };
    let results: Vec<Result<(R, S)>> = if parallel {
        thread::scope(|scope| {
            let handles: Vec<_> = shards
                .iter()
                .enumerate()
                .map(|(c, shard)| {
                    let run = &run;
                    scope.spawn(move || run(c, shard))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("client thread panicked")).collect()
        })
    } else {
        shards.iter().enumerate().map(|(c, shard)| run(c, shard)).collect()
    };
    let mut replicas = Vec::with_capacity(results.len());
    let mut stats = Vec::with_capacity(results.len());
    for r in results {
        let (rep, st) = r?;
        replicas.push(rep);
        stats.push(st);
    }
    let mean = aggregate(&replicas)?;
    let mut next = global.clone();
    next.set_params(&mean)?;
    Ok((next, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub clients: usize,
    /// Communication rounds; one metrics row pair per round.
    pub rounds: usize,
    /// Passes over the local shard per round.
    pub local_epochs: usize,
    pub train: TrainConfig,
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct LocalStats {
    objective: f64,
    correct: usize,
    samples: usize,
}

/// One pass over a shard.
fn local_pass(
    system: &mut InlSystem,
    shard: &MultiViewDataset,
    cfg: &TrainConfig,
    seed: u64,
    pass: usize,
    st: &mut LocalStats,
) -> Result<()> {
    let nodes = system.source_nodes();
    let mut noise = rng::stream(seed, "noise", pass as u64);
    for idx in epoch_batches(shard.len(), cfg.batch_size, seed, pass) {
        let step = system.train_step(&shard.batch(&nodes, &idx)?, &shard.labels_at(&idx), cfg, Some(&mut noise))?;
        st.objective += step.objective * step.samples as f64;
        st.correct += step.correct;
        st.samples += step.samples;
    }
    Ok(())
}

/// Bits exchanged per round: every client downloads and uploads the model.
pub fn fl_round_bits(num_params: usize, clients: usize, bits_per_value: u32) -> u64 {
    2 * num_params as u64 * clients as u64 * bits_per_value as u64
}

/// Federated training of full replicas over contiguous shards of the
/// training set.
pub fn train_fl(
    global: &mut InlSystem,
    train_set: &MultiViewDataset,
    test_set: Option<&MultiViewDataset>,
    cfg: &FlConfig,
) -> Result<Vec<MetricsRow>> {
    cfg.train.validate()?;
    if cfg.clients == 0 || cfg.clients > train_set.len() {
        return Err(Error::InvalidArgument(format!("{} clients for {} samples", cfg.clients, train_set.len())));
    }
    let shards = train_set.shards(cfg.clients);
    let per_round = fl_round_bits(global.num_params(), cfg.clients, cfg.train.bits_per_value);
    let mut rows = Vec::new();
    let mut cumulative = 0u64;
    for round in 1..=cfg.rounds {
        let local = |c: usize, rep: &mut InlSystem, shard: &MultiViewDataset| {
            let seed = rng::derive_seed(cfg.train.seed, "fl-client", (round * cfg.clients + c) as u64);
            let mut st = LocalStats::default();
            for pass in 1..=cfg.local_epochs {
                local_pass(rep, shard, &cfg.train, seed, pass, &mut st)?;
            }
            Ok(st)
        };
        let (next, stats) = fl_round(global, &shards, cfg.parallel, local)?;
        *global = next;
        cumulative += per_round;
        let seen: usize = stats.iter().map(|s| s.samples).sum();
        rows.push(MetricsRow {
            epoch: round,
            split: Split::Train,
            loss: -stats.iter().map(|s| s.objective).sum::<f64>() / seen as f64,
            accuracy: stats.iter().map(|s| s.correct).sum::<usize>() as f64 / seen as f64,
            cumulative_bits: cumulative,
        });
        if let Some(test) = test_set {
            let (loss, accuracy) = evaluate(global, test)?;
            rows.push(MetricsRow { epoch: round, split: Split::Test, loss, accuracy, cumulative_bits: cumulative });
        }
    }
    Ok(rows)
}
