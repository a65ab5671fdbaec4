//! Bandwidth formulas and the federated and split baselines.

use rand::Rng as _;

use super::gen;
use super::{CheckResult, Tally};
use crate::baselines::bandwidth::{fl_bits, inl_bits, sl_bits, table1, BandwidthParams};
use crate::baselines::fl::{aggregate, fl_round};
use crate::baselines::sl::{handoff, receive, train_sl, SlState};
use crate::data::{gen_dataset, SyntheticSpec};
use crate::error::Result;
use crate::graph::DagNetwork;
use crate::nn::{Activation, DenseLayer, FeedForwardNet, NetSpec};
use crate::protocol::{train, InlSystem, SystemSpec, TrainConfig};
use crate::rng;
use crate::tensor::Tensor;

const SUITE: &str = "bandwidth";

/// All twelve reference cells; the error is the distance from the shown
/// value in units of half its last digit.
pub fn table1_cells() -> CheckResult {
    let mut t = Tally::new(SUITE, "table1", 1.0);
    for (i, c) in table1().iter().enumerate() {
        let decimals = c.reference.split_once('.').map_or(0, |(_, f)| f.len());
        let shown: f64 = c.reference.parse().unwrap_or(f64::NAN);
        let half = 0.5 * 10f64.powi(-(decimals as i32));
        t.outcome(i as u64, (c.gbits - shown).abs() / half, c.matched);
    }
    t.finish()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Degree-one homogeneity in the bit width, `inl` blind to the model size,
/// `fl` blind to the dataset and fusion width.
pub fn bandwidth_homogeneity(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "formula_invariants", 1e-12);
    for i in 0..instances {
        let mut r = rng::stream(seed, "bandwidth", i);
        let b = BandwidthParams {
            q: r.random_range(0.0..1e6),
            p: r.random_range(1.0..1e5),
            s_bits: r.random_range(1..=64) as f64,
            clients: r.random_range(1..=1000) as f64,
            n_params: r.random_range(1.0..1e9),
            eta_frac: r.random(),
        };
        let k = r.random_range(0.1..10.0);
        let scaled = BandwidthParams { s_bits: b.s_bits * k, ..b };
        let other_n = BandwidthParams { n_params: r.random_range(1.0..1e9), ..b };
        let other_qp = BandwidthParams { q: r.random_range(0.0..1e6), p: r.random_range(1.0..1e5), ..b };
        let err = [
            rel(inl_bits(&scaled), k * inl_bits(&b)),
            rel(fl_bits(&scaled), k * fl_bits(&b)),
            rel(sl_bits(&scaled), k * sl_bits(&b)),
            rel(inl_bits(&other_n), inl_bits(&b)),
            rel(fl_bits(&other_qp), fl_bits(&b)),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        t.error(i, err);
    }
    t.finish()
}

fn scalar_net(w: f64, b: f64) -> Result<FeedForwardNet> {
    let layer = DenseLayer::new(Tensor::from_rows(&[vec![w]])?, Tensor::vector(&[b]), Activation::Linear)?;
    FeedForwardNet::new(vec![layer])
}

/// `w = 0` and `w = 2` average to 1; mismatched architectures are refused.
pub fn fl_aggregate_examples() -> CheckResult {
    let mut t = Tally::new(SUITE, "fl_aggregate", 0.0);
    let mean = scalar_net(0.0, 0.0).and_then(|a| aggregate(&[a, scalar_net(2.0, 2.0)?]));
    t.record(0, mean.map(|m| m.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)));
    let wide = scalar_net(0.0, 0.0).and_then(|a| {
        let layer = DenseLayer::new(Tensor::from_rows(&[vec![1.0, 1.0]])?, Tensor::vector(&[0.0]), Activation::Linear)?;
        Ok(aggregate(&[a, FeedForwardNet::new(vec![layer])?]).is_err())
    });
    t.record(1, wide.map(|refused| if refused { 0.0 } else { 1.0 }));
    t.finish()
}

/// A round in which no client trains returns the global model unchanged,
/// bit for bit. The error counts parameters that moved.
pub fn fl_zero_step_fixed_point(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "fl_fixed_point", 0.0);
    for i in 0..instances {
        let sys = gen::system(gen::topology(i), rng::derive_seed(seed, "fl-fixed", i), false);
        let shards = vec![(); 2 + i as usize % 4];
        let res = fl_round(&sys, &shards, i % 2 == 0, |_, _, _| Ok(())).map(|(next, _)| {
            sys.params().iter().zip(next.params()).filter(|(a, b)| a.to_bits() != b.to_bits()).count() as f64
        });
        t.record(i, res);
    }
    t.finish()
}

/// Serialising weights for the next client and reading them back is the
/// identity on bit patterns, special values included.
pub fn sl_handoff_bit_exact(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "sl_handoff", 0.0);
    for i in 0..instances {
        let mut r = rng::stream(seed, "handoff", i);
        let mut v: Vec<f64> = (0..r.random_range(0..200)).map(|_| f64::from_bits(r.random())).collect();
        v.extend([0.0, -0.0, f64::MIN_POSITIVE / 2.0, f64::INFINITY, f64::NEG_INFINITY, f64::NAN]);
        let res = receive(&handoff(&v)).map(|back| {
            if back.len() != v.len() {
                return f64::INFINITY;
            }
            v.iter().zip(&back).filter(|(a, b)| a.to_bits() != b.to_bits()).count() as f64
        });
        t.record(i, res);
    }
    t.finish()
}

fn single_client_pair(seed: u64, i: u64) -> Result<f64> {
    let spec = SyntheticSpec {
        num_classes: 3,
        feature_dim: 4,
        num_views: 1,
        noise_stds: vec![1.0],
        train_size: 96,
        test_size: 16,
        seed: rng::derive_seed(seed, "sl-data", i),
    };
    let data = gen_dataset(&spec)?;
    let dag = DagNetwork::star(1, 1e6)?;
    let encoder = NetSpec::new(&[(8, Activation::Tanh), (4, Activation::Linear)]).with_latent(2);
    let arch = SystemSpec::uniform(
        &dag,
        &encoder,
        &encoder,
        &NetSpec::new(&[(8, Activation::Tanh), (3, Activation::Softmax)]),
    );
    let dims = [(1, 4)].into_iter().collect();
    let sys_seed = rng::derive_seed(seed, "sl-system", i);
    let mut inl = InlSystem::build(dag, &arch, dims, None, sys_seed)?;
    let mut sl = SlState::new(inl.clone())?;
    let s = if i == 0 { 0.0 } else { 0.05 };
    let cfg = TrainConfig { s, eta: 0.05, batch_size: 16, epochs: 3, seed: sys_seed, ..TrainConfig::default() };
    train(&mut inl, &data.train, None, &cfg)?;
    train_sl(&mut sl, &data.train, None, 1, &cfg)?;
    let (a, b) = (inl.params(), sl.system().params());
    Ok(a.iter().zip(&b).filter(|(x, y)| x.to_bits() != y.to_bits()).count() as f64)
}

/// One-client split learning and in-network learning on a single source
/// follow the same weight trajectory. Instance 0 has `s = 0`.
pub fn sl_matches_inl_single_client(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "sl_single_client", 0.0);
    for i in 0..instances {
        t.record(i, single_client_pair(seed, i));
    }
    t.finish()
}
