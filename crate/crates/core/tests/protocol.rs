use std::collections::BTreeMap;

use inl_core::graph::DagNetwork;
use inl_core::nn::{flatten_grads, Activation, NetSpec};
use inl_core::protocol::{
    hop_loss_5node, max_relative_error, star_loss, InlSystem, LatentState, MonolithicNet, Noise, Objective, SystemSpec,
};
use inl_core::rng;
use inl_core::Tensor;
use rand::Rng;

const HIDDEN: [Activation; 4] = [Activation::Linear, Activation::Relu, Activation::Sigmoid, Activation::Tanh];

fn random_net(r: &mut rng::Rng, out: usize, last: Activation, smooth: bool) -> NetSpec {
    let depth = r.random_range(0..3);
    let mut layers = Vec::new();
    for _ in 0..depth {
        let act = if smooth { Activation::Tanh } else { HIDDEN[r.random_range(0..4)] };
        layers.push((r.random_range(1..6), act));
    }
    layers.push((out, last));
    NetSpec::new(&layers)
}

fn random_system(dag: DagNetwork, seed: u64, smooth: bool) -> InlSystem {
    let mut r = rng::stream(seed, "arch", 0);
    let classes = r.random_range(2..5);
    let mut nodes = BTreeMap::new();
    let mut dims = BTreeMap::new();
    for k in 1..=dag.num_nodes() {
        let spec = if k == dag.decision_node() {
            random_net(&mut r, classes, Activation::Softmax, smooth)
        } else if dag.is_source(k) {
            dims.insert(k, r.random_range(1..5));
            let d = r.random_range(1..4);
            random_net(&mut r, 2 * d, Activation::Linear, smooth).with_latent(d)
        } else {
            let act = if smooth { Activation::Tanh } else { HIDDEN[r.random_range(0..4)] };
            let width = r.random_range(1..5);
            random_net(&mut r, width, act, smooth)
        };
        nodes.insert(k, spec);
    }
    InlSystem::build(dag, &SystemSpec { nodes }, dims, None, seed).unwrap()
}

fn random_batch(sys: &InlSystem, rows: usize, seed: u64) -> (BTreeMap<usize, Tensor>, Vec<usize>) {
    let mut r = rng::stream(seed, "batch", 0);
    let batch = sys
        .input_dims()
        .iter()
        .map(|(&j, &d)| {
            let data = (0..rows * d).map(|_| r.random_range(-2.0..2.0)).collect();
            (j, Tensor::new(vec![rows, d], data).unwrap())
        })
        .collect();
    let labels = (0..rows).map(|_| r.random_range(0..sys.num_classes())).collect();
    (batch, labels)
}

fn topologies(i: u64) -> DagNetwork {
    match i % 4 {
        0 => DagNetwork::star(1, 8.0).unwrap(),
        1 => DagNetwork::star(2, 8.0).unwrap(),
        2 => DagNetwork::star(3, 8.0).unwrap(),
        _ => DagNetwork::five_node(8.0, 8.0, 8.0, 8.0).unwrap(),
    }
}

#[test]
fn split_backprop_equals_monolithic_network() {
    for i in 0..200u64 {
        let mut sys = random_system(topologies(i), 1000 + i, false);
        let rows = 1 + (i as usize % 5);
        let (batch, labels) = random_batch(&sys, rows, i);
        let mono = MonolithicNet::build(sys.dag(), sys.models(), sys.input_dims()).unwrap();

        let fwd = sys.forward_pass(&batch, Noise::Zero, 32).unwrap();
        let p_mono = mono.forward(&batch).unwrap();
        let out_diff = fwd.probs.data().iter().zip(p_mono.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(out_diff <= 1e-12, "instance {i}: outputs differ by {out_diff}");

        let (d, aux) = sys.output_deltas(&fwd, &labels, 0.0).unwrap();
        let back = sys.backward_pass(&fwd, &d, &aux, 0.0, 32).unwrap();
        let reference = mono.gradients(&batch, &labels).unwrap();
        let err = max_relative_error(&back.grads, &reference).unwrap();
        assert!(err <= 1e-12, "instance {i}: relative error {err}");
    }
}

#[test]
fn compat_check_agrees_with_monolithic_construction() {
    for i in 0..60u64 {
        let sys = random_system(topologies(i), 7 + i, false);
        let mut dims = sys.input_dims().clone();
        let mut r = rng::stream(i, "perturb", 0);
        if r.random_bool(0.5) {
            let j = *dims.keys().next().unwrap();
            *dims.get_mut(&j).unwrap() += 1;
        }
        let sizes = sys.models().iter().map(|(&k, m)| (k, m.layer_sizes())).collect();
        let ok = sys.dag().check_layer_compat(&sizes, &dims).is_ok();
        assert_eq!(ok, MonolithicNet::build(sys.dag(), sys.models(), &dims).is_ok(), "instance {i}");
    }
}

/// Minimized objective with the latent noise replayed from a fixed stream.
fn negated_objective(
    sys: &mut InlSystem,
    batch: &BTreeMap<usize, Tensor>,
    labels: &[usize],
    s: f64,
    noise_seed: u64,
) -> f64 {
    let mut r = rng::stream(noise_seed, "eps", 0);
    let fwd = sys.forward_pass(batch, Noise::Sample(&mut r), 32).unwrap();
    -sys.objective_value(&fwd, labels, s).unwrap()
}

#[test]
fn full_objective_gradient_matches_finite_differences() {
    for i in 0..24u64 {
        let mut sys = random_system(topologies(i), 500 + i, true);
        let (batch, labels) = random_batch(&sys, 3, 77 + i);
        let s = 0.3;
        let mut r = rng::stream(i, "eps", 0);
        let fwd = sys.forward_pass(&batch, Noise::Sample(&mut r), 32).unwrap();
        let (d, aux) = sys.output_deltas(&fwd, &labels, s).unwrap();
        let back = sys.backward_pass(&fwd, &d, &aux, s, 32).unwrap();
        let n = sys.dag().decision_node();
        let mut analytic = Vec::new();
        for (k, g) in &back.grads {
            analytic.extend(flatten_grads(g));
            if *k == n {
                for a in back.aux_grads.values() {
                    analytic.extend(flatten_grads(a));
                }
            }
        }
        let base = sys.params();
        assert_eq!(analytic.len(), base.len());
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for p in 0..base.len() {
            let mut plus = base.clone();
            plus[p] += h;
            sys.set_params(&plus).unwrap();
            let fp = negated_objective(&mut sys, &batch, &labels, s, i);
            let mut minus = base.clone();
            minus[p] -= h;
            sys.set_params(&minus).unwrap();
            let fm = negated_objective(&mut sys, &batch, &labels, s, i);
            let numeric = (fp - fm) / (2.0 * h);
            let denom = numeric.abs().max(analytic[p].abs()).max(1e-6);
            worst = worst.max((numeric - analytic[p]).abs() / denom);
        }
        sys.set_params(&base).unwrap();
        assert!(worst <= 1e-4, "instance {i}: relative error {worst}");
    }
}

fn scalar_ratio(u: &[f64], mu: &[f64], lv: &[f64]) -> f64 {
    // log N(u; μ, σ²) − log N(u; 0, 1), summed over coordinates
    let mut acc = 0.0;
    for k in 0..u.len() {
        let var = lv[k].exp();
        let log_q = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (u[k] - mu[k]).powi(2) / (2.0 * var);
        let log_p = -0.5 * (2.0 * std::f64::consts::PI).ln() - u[k] * u[k] / 2.0;
        acc += log_q - log_p;
    }
    acc
}

fn random_probs(r: &mut rng::Rng, n: usize, k: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v / s).collect()
        })
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

fn random_latent(r: &mut rng::Rng, n: usize, d: usize) -> LatentState {
    let mut t = || Tensor::new(vec![n, d], (0..n * d).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap();
    LatentState { u: t(), mu: t(), logvar: t() }
}

#[test]
fn star_loss_matches_scalar_oracle() {
    for i in 0..50u64 {
        let mut r = rng::stream(i, "star-oracle", 0);
        let (n, k, j_count) = (r.random_range(1..6), r.random_range(2..5), r.random_range(1..4));
        let s = r.random_range(0.0..2.0);
        let probs = random_probs(&mut r, n, k);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut aux = BTreeMap::new();
        let mut lat = BTreeMap::new();
        for j in 1..=j_count {
            aux.insert(j, random_probs(&mut r, n, k));
            lat.insert(j, random_latent(&mut r, n, 2));
        }
        let mut expected = 0.0;
        for i in 0..n {
            expected += probs.get(i, labels[i]).ln() / n as f64;
            for j in 1..=j_count {
                let l = &lat[&j];
                let term = aux[&j].get(i, labels[i]).ln() - scalar_ratio(l.u.row(i), l.mu.row(i), l.logvar.row(i));
                expected += s * term / n as f64;
            }
        }
        let got = star_loss(&probs, &aux, &labels, &lat, s).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn hop_loss_matches_scalar_oracle() {
    for i in 0..50u64 {
        let mut r = rng::stream(i, "hop-oracle", 0);
        let (n, k) = (r.random_range(1..6), r.random_range(2..5));
        let s = r.random_range(0.0..2.0);
        let probs = random_probs(&mut r, n, k);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let lat: BTreeMap<usize, LatentState> = (1..=3).map(|j| (j, random_latent(&mut r, n, 3))).collect();
        let ratio = |j: usize, i: usize| {
            let l = &lat[&j];
            scalar_ratio(l.u.row(i), l.mu.row(i), l.logvar.row(i))
        };
        let mut expected = 0.0;
        for i in 0..n {
            expected += (probs.get(i, labels[i]).ln() - s * ratio(1, i)) / n as f64;
            expected -= 2.0 * s * (ratio(2, i) + ratio(3, i)) / n as f64;
        }
        let got = hop_loss_5node(&probs, &labels, &lat, s).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
    }
}

#[test]
fn decision_node_gradients_need_only_its_own_inputs() {
    // rebuild the decision node's gradients from nothing but what reached it
    let mut sys = random_system(DagNetwork::star(3, 8.0).unwrap(), 41, false);
    let (batch, labels) = random_batch(&sys, 4, 3);
    let fwd = sys.forward_pass(&batch, Noise::Zero, 32).unwrap();
    let (d, aux) = sys.output_deltas(&fwd, &labels, 0.2).unwrap();
    let back = sys.backward_pass(&fwd, &d, &aux, 0.2, 32).unwrap();

    let n = sys.dag().decision_node();
    let mut alone = sys.model(n).unwrap().net.clone();
    let parts: Vec<&Tensor> = sys.dag().in_neighbors(n).iter().map(|i| &fwd.emitted[i]).collect();
    alone.forward(&Tensor::concat_cols(&parts).unwrap()).unwrap();
    let b = alone.backward_from_delta(&d).unwrap();
    assert_eq!(b.grads, back.grads[&n]);
}

#[test]
fn objective_detection_and_coefficients() {
    let sys = random_system(DagNetwork::five_node(1.0, 1.0, 1.0, 1.0).unwrap(), 3, false);
    assert_eq!(sys.objective(), &Objective::FiveNode);
    assert_eq!(sys.ratio_coefficients(), BTreeMap::from([(1, 1.0), (2, 2.0), (3, 2.0)]));
}
