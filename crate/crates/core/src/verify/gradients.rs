//! Network engine and split-protocol checks.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::gen;
use super::{CheckResult, Tally};
use crate::data::{gen_dataset, SyntheticSpec};
use crate::error::Result;
use crate::graph::DagNetwork;
use crate::nn::{flatten_grads, gaussian_kl_closed_form, gaussian_log_ratio, Activation, DenseLayer, FeedForwardNet};
use crate::protocol::{
    max_relative_error, train, BackwardOutput, Direction, ForwardOutput, InlSystem, MonolithicNet, Noise, Split,
    SystemSpec, TrainConfig,
};
use crate::rng;
use crate::tensor::Tensor;

const SUITE: &str = "gradients";
const FD_STEP: f64 = 1e-5;

fn rel_err(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6)
}

/// `mean_i Σ_k (c_ik a_ik + a_ik²/2)` over the output `a`.
fn smooth_scalar(out: &Tensor, c: &Tensor) -> f64 {
    let total: f64 = out.data().iter().zip(c.data()).map(|(a, c)| c * a + 0.5 * a * a).sum();
    total / out.rows() as f64
}

const KINK_MARGIN: f64 = 1e-3;

/// Smallest `|z|` over relu pre-activations, so that inputs putting a
/// difference step across a kink can be redrawn.
fn relu_margin(net: &FeedForwardNet, x: &Tensor) -> Result<f64> {
    let mut a = x.clone();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        if layer.activation() == Activation::Relu {
            let linear = DenseLayer::new(layer.weights().clone(), layer.biases().clone(), Activation::Linear)?;
            let z = FeedForwardNet::new(vec![linear])?.predict(&a)?;
            margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
        a = FeedForwardNet::new(vec![layer.clone()])?.predict(&a)?;
    }
    Ok(margin)
}

/// One standalone network: parameter and input gradients against central
/// differences of a smooth scalar of the output.
fn nn_fd_instance(seed: u64, i: u64) -> Result<f64> {
    let mut r = rng::stream(seed, "fd-net", i);
    let (spec, in_dim) = gen::standalone_net(&mut r);
    let (mut net, _) = spec.build(in_dim, &mut r)?;
    // zero biases behind a dead relu put the next relu exactly on its kink
    let jittered: Vec<f64> = net.params().iter().map(|p| p + r.random_range(-0.2..0.2)).collect();
    net.set_params(&jittered)?;
    let rows = r.random_range(1..4);
    let mut x = Tensor::zeros(&[rows, in_dim]);
    for _ in 0..1000 {
        x = Tensor::new(vec![rows, in_dim], (0..rows * in_dim).map(|_| r.random_range(-1.5..1.5)).collect())?;
        if relu_margin(&net, &x)? >= KINK_MARGIN {
            break;
        }
    }
    let out_dim = net.out_dim();
    let c = Tensor::new(vec![rows, out_dim], (0..rows * out_dim).map(|_| r.random_range(-1.0..1.0)).collect())?;

    let out = net.forward(&x)?;
    let mut delta = c.clone();
    delta.add_assign(&out)?;
    let back = net.backward_from_delta(&delta)?;
    let analytic = flatten_grads(&back.grads);

    let base = net.params();
    let mut worst: f64 = 0.0;
    for p in 0..base.len() {
        let mut v = base.clone();
        v[p] = base[p] + FD_STEP;
        net.set_params(&v)?;
        let fp = smooth_scalar(&net.predict(&x)?, &c);
        v[p] = base[p] - FD_STEP;
        net.set_params(&v)?;
        let fm = smooth_scalar(&net.predict(&x)?, &c);
        worst = worst.max(rel_err((fp - fm) / (2.0 * FD_STEP), analytic[p]));
    }
    net.set_params(&base)?;
    // delta_in is per sample: d(rows · f)/dx
    for e in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[e] += FD_STEP;
        let fp = smooth_scalar(&net.predict(&xp)?, &c);
        let mut xm = x.clone();
        xm.data_mut()[e] -= FD_STEP;
        let fm = smooth_scalar(&net.predict(&xm)?, &c);
        let numeric = rows as f64 * (fp - fm) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(numeric, back.delta_in.data()[e]));
    }
    Ok(worst)
}

pub fn nn_finite_differences(seed: u64, nets: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "nn_finite_differences", 1e-4);
    for i in 0..nets {
        t.record(i, nn_fd_instance(seed, i));
    }
    t.finish()
}

fn split_instance(seed: u64, i: u64) -> Result<f64> {
    let mut sys = gen::system(gen::topology(i), rng::derive_seed(seed, "split-system", i), false);
    let (batch, labels) = gen::batch(&sys, 1 + (i as usize % 5), rng::derive_seed(seed, "split-batch", i));
    let mono = MonolithicNet::build(sys.dag(), sys.models(), sys.input_dims())?;
    let fwd = sys.forward_pass(&batch, Noise::Zero, 32)?;
    let out_diff =
        fwd.probs.data().iter().zip(mono.forward(&batch)?.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let (d, aux) = sys.output_deltas(&fwd, &labels, 0.0)?;
    let back = sys.backward_pass(&fwd, &d, &aux, 0.0, 32)?;
    let err = max_relative_error(&back.grads, &mono.gradients(&batch, &labels)?)?;
    Ok(err.max(out_diff))
}

/// With `s = 0` and zero latent noise, gradients through the protocol
/// against the monolithic network. Instances cycle through star J = 1, 2, 3
/// and the five-node net; `per_topology` of each.
pub fn split_backprop(seed: u64, per_topology: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "split_backprop", 1e-12);
    for i in 0..4 * per_topology {
        t.record(i, split_instance(seed, i));
    }
    t.finish()
}

/// Instance `i` of [`split_backprop`], with its topology name.
pub fn split_backprop_instance(seed: u64, i: u64) -> (&'static str, Result<f64>) {
    (gen::topology_name(i), split_instance(seed, i))
}

fn negated_objective(
    sys: &mut InlSystem,
    batch: &BTreeMap<usize, Tensor>,
    labels: &[usize],
    s: f64,
    noise_seed: u64,
) -> Result<f64> {
    let mut r = rng::stream(noise_seed, "eps", 0);
    let fwd = sys.forward_pass(batch, Noise::Sample(&mut r), 32)?;
    Ok(-sys.objective_value(&fwd, labels, s)?)
}

fn objective_fd_instance(seed: u64, i: u64) -> Result<f64> {
    let mut sys = gen::system(gen::topology(i), rng::derive_seed(seed, "fd-system", i), true);
    let (batch, labels) = gen::batch(&sys, 3, rng::derive_seed(seed, "fd-batch", i));
    let s = 0.3;
    let noise_seed = rng::derive_seed(seed, "fd-noise", i);
    let mut r = rng::stream(noise_seed, "eps", 0);
    let fwd = sys.forward_pass(&batch, Noise::Sample(&mut r), 32)?;
    let (d, aux) = sys.output_deltas(&fwd, &labels, s)?;
    let back = sys.backward_pass(&fwd, &d, &aux, s, 32)?;
    let n = sys.dag().decision_node();
    // same order as InlSystem::params
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
    let mut worst: f64 = 0.0;
    for p in 0..base.len() {
        let mut v = base.clone();
        v[p] = base[p] + FD_STEP;
        sys.set_params(&v)?;
        let fp = negated_objective(&mut sys, &batch, &labels, s, noise_seed)?;
        v[p] = base[p] - FD_STEP;
        sys.set_params(&v)?;
        let fm = negated_objective(&mut sys, &batch, &labels, s, noise_seed)?;
        worst = worst.max(rel_err((fp - fm) / (2.0 * FD_STEP), analytic[p]));
    }
    Ok(worst)
}

/// Full training objective (`s > 0`, sampled latents replayed from a fixed
/// stream) against central differences over every parameter.
pub fn objective_finite_differences(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "objective_finite_differences", 1e-4);
    for i in 0..instances {
        t.record(i, objective_fd_instance(seed, i));
    }
    t.finish()
}

fn pass_pair(seed: u64, label: &str, i: u64, s: f64) -> Result<(InlSystem, ForwardOutput, BackwardOutput)> {
    let mut sys = gen::system(gen::topology(i), rng::derive_seed(seed, label, i), false);
    let (batch, labels) = gen::batch(&sys, 1 + (i as usize % 4), rng::derive_seed(seed, label, i + 1_000_000));
    let mut r = rng::stream(seed, label, i + 2_000_000);
    let fwd = sys.forward_pass(&batch, Noise::Sample(&mut r), 32)?;
    let (d, aux) = sys.output_deltas(&fwd, &labels, s)?;
    let back = sys.backward_pass(&fwd, &d, &aux, s, 32)?;
    Ok((sys, fwd, back))
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// The pieces a node sends back, concatenated in sender order, rebuild the
/// tail of its input-layer error vector; what a node receives is the sum of
/// the pieces addressed to it.
pub fn subvector_conservation(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "subvector_conservation", 0.0);
    for i in 0..instances {
        let r = pass_pair(seed, "conserve", i, 0.0).and_then(|(sys, _, back)| {
            let mut worst: f64 = 0.0;
            for (&k, delta_in) in &back.delta_in {
                let pieces: Vec<&Tensor> = back
                    .messages
                    .iter()
                    .filter(|m| m.direction == Direction::Backward && m.from == k)
                    .map(|m| &m.payload)
                    .collect();
                if pieces.is_empty() {
                    continue;
                }
                let joined = Tensor::concat_cols(&pieces)?;
                let own = sys.input_dims().get(&k).copied().unwrap_or(0);
                let tail = delta_in.split_cols(&[own, delta_in.cols() - own])?.pop().expect("two parts");
                worst = worst.max(max_abs_diff(&joined, &tail));
            }
            for (&k, got) in &back.received {
                let mut sum: Option<Tensor> = None;
                for m in back.messages.iter().filter(|m| m.direction == Direction::Backward && m.to == k) {
                    match &mut sum {
                        Some(acc) => acc.add_assign(&m.payload)?,
                        None => sum = Some(m.payload.clone()),
                    }
                }
                worst = worst.max(sum.map_or(f64::INFINITY, |s| max_abs_diff(&s, got)));
            }
            Ok(worst)
        });
        t.record(i, r);
    }
    t.finish()
}

/// Forward and backward bits agree on every edge.
pub fn bits_symmetry(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "bits_symmetry", 0.0);
    for i in 0..instances {
        let r = pass_pair(seed, "bits", i, 0.1).map(|(sys, fwd, back)| {
            let mut worst: f64 = 0.0;
            for e in sys.dag().edges() {
                let f: u64 = fwd.messages.iter().filter(|m| m.from == e.from && m.to == e.to).map(|m| m.bits).sum();
                let b: u64 = back.messages.iter().filter(|m| m.from == e.to && m.to == e.from).map(|m| m.bits).sum();
                worst = worst.max(if f == 0 { f64::INFINITY } else { f.abs_diff(b) as f64 });
            }
            worst
        });
        t.record(i, r);
    }
    t.finish()
}

/// The decision node's gradients follow from its own inputs and the loss
/// gradient at its output alone.
pub fn decision_locality(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "decision_locality", 0.0);
    for i in 0..instances {
        let r = (|| {
            let mut sys = gen::system(gen::topology(i), rng::derive_seed(seed, "local", i), false);
            let (batch, labels) = gen::batch(&sys, 1 + (i as usize % 4), rng::derive_seed(seed, "local-batch", i));
            let mut noise = rng::stream(seed, "local-noise", i);
            let fwd = sys.forward_pass(&batch, Noise::Sample(&mut noise), 32)?;
            let (d, aux) = sys.output_deltas(&fwd, &labels, 0.2)?;
            let back = sys.backward_pass(&fwd, &d, &aux, 0.2, 32)?;
            let n = sys.dag().decision_node();
            let mut alone = sys.model(n).expect("decision model").net.clone();
            let parts: Vec<&Tensor> = sys.dag().in_neighbors(n).iter().map(|k| &fwd.emitted[k]).collect();
            alone.forward(&Tensor::concat_cols(&parts)?)?;
            let b = alone.backward_from_delta(&d)?;
            let (x, y) = (flatten_grads(&b.grads), flatten_grads(&back.grads[&n]));
            Ok(x.iter()
                .zip(&y)
                .fold(if x.len() == y.len() { 0.0 } else { f64::INFINITY }, |m: f64, (a, b)| m.max((a - b).abs())))
        })();
        t.record(i, r);
    }
    t.finish()
}

/// An update with zero learning rate leaves every parameter bit-identical.
pub fn zero_rate_is_identity(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "zero_rate_is_identity", 0.0);
    for i in 0..instances {
        let r = pass_pair(seed, "eta0", i, 0.5).and_then(|(mut sys, _, back)| {
            let before = sys.params();
            sys.apply_gradients(&back, 0.0)?;
            Ok(differing_bits(&before, &sys.params()))
        });
        t.record(i, r);
    }
    t.finish()
}

fn differing_bits(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).filter(|(x, y)| x.to_bits() != y.to_bits()).count() as f64
}

fn short_run(seed: u64, i: u64) -> Result<Vec<f64>> {
    let mut sys = gen::system(gen::topology(i), rng::derive_seed(seed, "determinism", i), false);
    let cfg =
        TrainConfig { seed: rng::derive_seed(seed, "determinism-cfg", i), eta: 0.05, s: 0.1, ..TrainConfig::default() };
    let mut noise = rng::stream(cfg.seed, "noise", 0);
    for step in 0..5 {
        let (batch, labels) = gen::batch(&sys, 4, rng::derive_seed(cfg.seed, "determinism-batch", step));
        sys.train_step(&batch, &labels, &cfg, Some(&mut noise))?;
    }
    Ok(sys.params())
}

/// Two runs from the same seed end at bit-identical weights. The error is
/// the number of parameters that differ.
pub fn determinism(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "determinism", 0.0);
    for i in 0..instances {
        t.record(i, short_run(seed, i).and_then(|a| Ok(differing_bits(&a, &short_run(seed, i)?))));
    }
    t.finish()
}

const KL_SAMPLES: usize = 200_000;

/// The log-density ratio averaged over reparametrised samples against the
/// closed-form KL. Case 0 is `μ = 1`, unit variance, one dimension.
pub fn kl_monte_carlo(seed: u64, cases: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "kl_monte_carlo", 0.01);
    for i in 0..cases {
        let mut r = rng::stream(seed, "kl", i);
        let (mu, lv): (Vec<f64>, Vec<f64>) = if i == 0 {
            (vec![1.0], vec![0.0])
        } else {
            let d = r.random_range(1..4);
            ((0..d).map(|_| r.random_range(-1.0..1.0)).collect(), (0..d).map(|_| r.random_range(-1.0..0.5)).collect())
        };
        let sd: Vec<f64> = lv.iter().map(|v| (0.5 * v).exp()).collect();
        let mut acc = 0.0;
        let mut u = vec![0.0; mu.len()];
        let mut failed = None;
        for _ in 0..KL_SAMPLES {
            for k in 0..mu.len() {
                let e: f64 = StandardNormal.sample(&mut r);
                u[k] = mu[k] + sd[k] * e;
            }
            match gaussian_log_ratio(&u, &mu, &lv) {
                Ok(v) => acc += v,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        let res = match failed {
            Some(e) => Err(e),
            None => Ok((acc / KL_SAMPLES as f64 - gaussian_kl_closed_form(&mu, &lv)).abs()),
        };
        t.record(i, res);
    }
    t.finish()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median training loss over the first and last tenth of the epochs, on the
/// default synthetic task and configuration.
pub fn smoke_losses(seed: u64) -> Result<(f64, f64)> {
    let data = gen_dataset(&SyntheticSpec { seed, ..SyntheticSpec::default() })?;
    let dag = DagNetwork::star(data.spec.num_views, 128.0)?;
    let spec = SystemSpec::standard(&dag, data.spec.num_classes);
    let dims = dag.sources().iter().map(|&j| (j, data.spec.feature_dim)).collect();
    let mut sys = InlSystem::build(dag, &spec, dims, None, seed)?;
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let rows = train(&mut sys, &data.train, None, &cfg)?;
    let losses: Vec<f64> = rows.iter().filter(|r| r.split == Split::Train).map(|r| r.loss).collect();
    let tenth = (losses.len() / 10).max(1);
    Ok((median(losses[..tenth].to_vec()), median(losses[losses.len() - tenth..].to_vec())))
}

/// Training improves the loss: the error is `last − first`, which must be
/// negative.
pub fn smoke_training(seed: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "smoke_training", 0.0);
    match smoke_losses(seed) {
        Ok((first, last)) => t.outcome(0, last - first, last < first),
        Err(e) => t.record(0, Err(e)),
    }
    t.finish()
}
