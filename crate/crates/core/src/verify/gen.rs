//! Seeded random instances for the sweeps.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::graph::{DagNetwork, Edge};
use crate::info::{Channel, JointPmf};
use crate::nn::{Activation, NetSpec};
use crate::protocol::{InlSystem, SystemSpec};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

pub const HIDDEN: [Activation; 4] = [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Tanh];

/// Random distribution over `k` outcomes; with `sparse`, about a fifth of
/// the entries are exactly zero.
pub fn dist(r: &mut Rng, k: usize, sparse: bool) -> Vec<f64> {
    loop {
        let w: Vec<f64> =
            (0..k).map(|_| if sparse && r.random_bool(0.2) { 0.0 } else { r.random::<f64>().powi(2) }).collect();
        let total: f64 = w.iter().sum();
        if total > 1e-3 {
            return w.iter().map(|v| v / total).collect();
        }
    }
}

pub fn channel(r: &mut Rng, inputs: usize, outputs: usize, sparse: bool) -> Channel {
    Channel::new((0..inputs).map(|_| dist(r, outputs, sparse)).collect()).expect("rows are distributions")
}

#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    pub joint: JointPmf,
    pub channels: Vec<Channel>,
}

/// Three sources with alphabets in `2..=max_x`, a binary or ternary label,
/// and per-source channels with outputs in `2..=max_u`. Identity and
/// constant channels turn up now and then.
pub fn discrete(seed: u64, max_x: usize, max_u: usize) -> DiscreteInstance {
    let mut r = rng::stream(seed, "discrete", 0);
    let mut alphabets: Vec<usize> = (0..3).map(|_| r.random_range(2..=max_x)).collect();
    alphabets.push(r.random_range(2..=3));
    let size = alphabets.iter().product();
    let sparse = r.random_bool(0.3);
    let joint = JointPmf::new(alphabets.clone(), dist(&mut r, size, sparse)).expect("valid joint");
    let channels = (0..3)
        .map(|j| match r.random_range(0..8) {
            0 => Channel::identity(alphabets[j]),
            1 => Channel::constant(alphabets[j], &dist(&mut r, 2, false)).expect("valid row"),
            _ => {
                let out = r.random_range(2..=max_u);
                let sparse = r.random_bool(0.2);
                channel(&mut r, alphabets[j], out, sparse)
            }
        })
        .collect();
    DiscreteInstance { joint, channels }
}

/// Five-node, three-source star, or a six-node net with two relays in
/// series, with capacities in `[0, 3)`.
pub fn dag(r: &mut Rng) -> DagNetwork {
    let kind = r.random_range(0..3);
    let mut cap = || r.random_range(0.0..3.0);
    match kind {
        0 => DagNetwork::five_node(cap(), cap(), cap(), cap()).expect("valid graph"),
        1 => DagNetwork::star(3, cap()).expect("valid graph"),
        _ => {
            let edges = vec![
                Edge { from: 1, to: 4, capacity: cap() },
                Edge { from: 2, to: 4, capacity: cap() },
                Edge { from: 3, to: 5, capacity: cap() },
                Edge { from: 4, to: 5, capacity: cap() },
                Edge { from: 4, to: 6, capacity: cap() },
                Edge { from: 5, to: 6, capacity: cap() },
            ];
            DagNetwork::new(6, edges, [1, 2, 3]).expect("valid graph")
        }
    }
}

pub fn with_extra_capacity(dag: &DagNetwork, edge: usize, extra: f64) -> DagNetwork {
    let mut edges = dag.edges().to_vec();
    edges[edge].capacity += extra;
    DagNetwork::new(dag.num_nodes(), edges, dag.sources().iter().copied()).expect("same structure")
}

/// Star with one, two or three sources, or the five-node net.
pub fn topology(i: u64) -> DagNetwork {
    match i % 4 {
        0 => DagNetwork::star(1, 8.0),
        1 => DagNetwork::star(2, 8.0),
        2 => DagNetwork::star(3, 8.0),
        _ => DagNetwork::five_node(8.0, 8.0, 8.0, 8.0),
    }
    .expect("valid graph")
}

pub fn topology_name(i: u64) -> &'static str {
    ["star1", "star2", "star3", "five-node"][(i % 4) as usize]
}

fn net(r: &mut Rng, out: usize, last: Activation, smooth: bool) -> NetSpec {
    let depth = r.random_range(0..3);
    let mut layers = Vec::new();
    for _ in 0..depth {
        let act = if smooth { Activation::Tanh } else { HIDDEN[r.random_range(0..4)] };
        layers.push((r.random_range(1..6), act));
    }
    layers.push((out, last));
    NetSpec::new(&layers)
}

/// Small random networks on every node of `dag`. With `smooth`, every
/// hidden layer is tanh so finite differences see no kinks.
pub fn system(dag: DagNetwork, seed: u64, smooth: bool) -> InlSystem {
    let mut r = rng::stream(seed, "arch", 0);
    let classes = r.random_range(2..5);
    let mut nodes = BTreeMap::new();
    let mut dims = BTreeMap::new();
    for k in 1..=dag.num_nodes() {
        let spec = if k == dag.decision_node() {
            net(&mut r, classes, Activation::Softmax, smooth)
        } else if dag.is_source(k) {
            dims.insert(k, r.random_range(1..5));
            let d = r.random_range(1..4);
            net(&mut r, 2 * d, Activation::Linear, smooth).with_latent(d)
        } else {
            let act = if smooth { Activation::Tanh } else { HIDDEN[r.random_range(0..4)] };
            let width = r.random_range(1..5);
            net(&mut r, width, act, smooth)
        };
        nodes.insert(k, spec);
    }
    InlSystem::build(dag, &SystemSpec { nodes }, dims, None, seed).expect("generated systems are consistent")
}

pub fn batch(sys: &InlSystem, rows: usize, seed: u64) -> (BTreeMap<usize, Tensor>, Vec<usize>) {
    let mut r = rng::stream(seed, "batch", 0);
    let batch = sys
        .input_dims()
        .iter()
        .map(|(&j, &d)| {
            let data = (0..rows * d).map(|_| r.random_range(-2.0..2.0)).collect();
            (j, Tensor::new(vec![rows, d], data).expect("shape matches"))
        })
        .collect();
    let labels = (0..rows).map(|_| r.random_range(0..sys.num_classes())).collect();
    (batch, labels)
}

/// A standalone random network: 1 to 3 layers, any activation in any
/// position (softmax only last).
pub fn standalone_net(r: &mut Rng) -> (NetSpec, usize) {
    let depth = r.random_range(1..4);
    let mut layers = Vec::new();
    for l in 0..depth {
        let act = if l + 1 == depth && r.random_bool(0.3) { Activation::Softmax } else { HIDDEN[r.random_range(0..4)] };
        layers.push((r.random_range(1..6), act));
    }
    (NetSpec::new(&layers), r.random_range(1..6))
}
