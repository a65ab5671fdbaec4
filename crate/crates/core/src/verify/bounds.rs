//! Entropy identities, the Lagrangian, the relay lower bounds and the
//! boundary search.

use rand::Rng as _;

use super::gen;
use super::{CheckResult, Tally};
use crate::error::Result;
use crate::info::{
    compose, lagrangian_ls, lower_bound_check, optimal_q, prop1_curve, variational_bound_check, Channel, JointPmf,
    QSet, BOUND_TOL,
};
use crate::rng::{self, Rng};

const SUITE: &str = "bounds";

/// Multipliers of the boundary sweep.
pub const PROP1_S: [f64; 4] = [0.0, 0.1, 1.0, 10.0];

fn random_subset(r: &mut Rng, pool: &mut Vec<usize>, max: usize) -> Vec<usize> {
    let k = r.random_range(1..=max.min(pool.len()));
    (0..k).map(|_| pool.swap_remove(r.random_range(0..pool.len()))).collect()
}

fn entropy_instance(seed: u64, i: u64) -> Result<f64> {
    let inst = gen::discrete(rng::derive_seed(seed, "entropy", i), 3, 3);
    let composed = compose(&inst.joint, &inst.channels)?;
    let p = composed.pmf();
    let mut r = rng::stream(seed, "entropy-vars", i);
    let mut pool: Vec<usize> = (0..p.num_vars()).collect();
    let a = random_subset(&mut r, &mut pool, 3);
    let b = random_subset(&mut r, &mut pool, 2);
    let c = if pool.is_empty() || r.random_bool(0.3) { Vec::new() } else { random_subset(&mut r, &mut pool, 2) };
    let ab: Vec<usize> = a.iter().chain(&b).copied().collect();
    let h_a = p.entropy(&a)?;
    let h_a_b = p.conditional_entropy(&a, &b)?;
    let chain = (p.entropy(&ab)? - p.entropy(&b)? - h_a_b).abs();
    let mi = p.mutual_information(&a, &b, &c)?;
    let mi_id = if c.is_empty() { (mi - (h_a - h_a_b)).abs() } else { 0.0 };
    // sign violations count as errors alongside the identity residuals
    Ok([-h_a, h_a_b - h_a, -mi, chain, mi_id].into_iter().fold(0.0, f64::max))
}

/// Nonnegativity, conditioning never increases entropy, and the chain rule,
/// on random variable subsets of composed pmfs.
pub fn entropy_laws(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "entropy_laws", 1e-12);
    for i in 0..instances {
        t.record(i, entropy_instance(seed, i));
    }
    t.finish()
}

/// `L_s` with fixed channels never increases with `s`.
pub fn lagrangian_monotone(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "lagrangian_monotone", 1e-12);
    for i in 0..instances {
        let inst = gen::discrete(rng::derive_seed(seed, "lagrangian", i), 3, 3);
        let mut r = rng::stream(seed, "lagrangian-s", i);
        let s1 = r.random_range(0.0..5.0);
        let s2 = s1 + r.random_range(0.0..5.0);
        let res = lagrangian_ls(&inst.joint, &inst.channels, s1)
            .and_then(|a| Ok((lagrangian_ls(&inst.joint, &inst.channels, s2)? - a).max(0.0)));
        t.record(i, res);
    }
    t.finish()
}

/// Random combiner `U_4 | U_2, U_3`; a quarter are the identity on the pair.
pub fn random_combiner(r: &mut Rng, channels: &[Channel]) -> Channel {
    let rows = channels[1].outputs() * channels[2].outputs();
    if r.random_range(0..4) == 0 {
        return Channel::identity(rows);
    }
    let out = r.random_range(1..=4);
    let sparse = r.random_bool(0.3);
    gen::channel(r, rows, out, sparse)
}

struct LemmaInstance {
    joint: JointPmf,
    channels: Vec<Channel>,
    combiner: Channel,
    s: f64,
}

fn lemma_instance(seed: u64, label: &str, i: u64) -> LemmaInstance {
    let inst = gen::discrete(rng::derive_seed(seed, label, i), 3, 3);
    let mut r = rng::stream(seed, label, i);
    let combiner = random_combiner(&mut r, &inst.channels);
    let s = if i.is_multiple_of(10) { 0.0 } else { r.random_range(0.0..3.0) };
    LemmaInstance { joint: inst.joint, channels: inst.channels, combiner, s }
}

/// `L_s ≥ L_s^low`; the error is how far the bound overshoots.
pub fn lemma1_sweep(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "lemma1", BOUND_TOL);
    for i in 0..instances {
        let li = lemma_instance(seed, "lemma1", i);
        t.record(i, lower_bound_check(&li.joint, &li.channels, &li.combiner, li.s).map(|b| (b.l_low - b.l_s).max(0.0)));
    }
    t.finish()
}

/// At the true conditionals the variational bound is tight.
pub fn lemma2_optimal(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "lemma2_optimal", 1e-9);
    for i in 0..instances {
        let li = lemma_instance(seed, "lemma2", i);
        let res = optimal_q(&li.joint, &li.channels, &li.combiner)
            .and_then(|q| variational_bound_check(&li.joint, &li.channels, &li.combiner, &q, li.s))
            .map(|v| v.gap.abs());
        t.record(i, res);
    }
    t.finish()
}

fn mix_rows(r: &mut Rng, ch: &Channel, lambda: f64) -> Result<Channel> {
    let rows = ch
        .rows()
        .iter()
        .map(|row| {
            let noise = gen::dist(r, row.len(), false);
            let mut mixed: Vec<f64> = row.iter().zip(&noise).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
            let total: f64 = mixed.iter().sum();
            mixed.iter_mut().for_each(|v| *v /= total);
            mixed
        })
        .collect();
    Channel::new(rows)
}

/// Every component of `q` pulled towards a random distribution by a factor
/// in `[0.05, 1)`.
pub fn perturb_q(r: &mut Rng, q: &QSet) -> Result<QSet> {
    let lambda = r.random_range(0.05..1.0);
    let u1 = mix_rows(r, &Channel::new(vec![q.u1.clone()])?, lambda)?.rows()[0].clone();
    Ok(QSet {
        decoder: mix_rows(r, &q.decoder, lambda)?,
        u1,
        u2: mix_rows(r, &q.u2, lambda)?,
        u3: mix_rows(r, &q.u3, lambda)?,
    })
}

/// `per` perturbations of the optimal `Q` on each of `instances` instances;
/// every one must open a strictly positive gap. The error is `−gap`.
pub fn lemma2_perturbed(seed: u64, instances: u64, per: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "lemma2_perturbed", 0.0);
    for i in 0..instances {
        let li = lemma_instance(seed, "lemma2", i);
        let mut r = rng::stream(seed, "lemma2-perturb", i);
        let q = match optimal_q(&li.joint, &li.channels, &li.combiner) {
            Ok(q) => q,
            Err(e) => {
                t.record(i * per, Err(e));
                continue;
            }
        };
        for k in 0..per {
            let res = perturb_q(&mut r, &q)
                .and_then(|p| variational_bound_check(&li.joint, &li.channels, &li.combiner, &p, li.s));
            match res {
                Ok(v) => t.outcome(i * per + k, -v.gap, v.gap > 0.0),
                Err(e) => t.record(i * per + k, Err(e)),
            }
        }
    }
    t.finish()
}

/// The fixed binary toy: `Y` a fair bit, `X_j` its copy through flips of
/// probability 0.1, 0.2 and 0.3.
pub fn prop1_toy() -> JointPmf {
    JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).expect("valid flips")
}

/// Boundary points on the toy at `s ∈ {0, 0.1, 1, 10}`. Per point the error
/// covers the identity residual and any rise of `Δ_s` from the previous
/// point; at `s = 0` the maximum must equal `−H(Y|X)` and at `s = 10` the
/// channels must be within one grid step of constant.
pub fn prop1_boundary(step: f64) -> CheckResult {
    let mut t = Tally::new(SUITE, "prop1", 1e-9);
    let joint = prop1_toy();
    let pts = match prop1_curve(&joint, &PROP1_S, step) {
        Ok(p) => p,
        Err(e) => {
            t.record(0, Err(e));
            return t.finish();
        }
    };
    let identity = vec![Channel::identity(2); 3];
    for (k, p) in pts.iter().enumerate() {
        let mut err = p.identity_residual.abs();
        if k > 0 {
            err = err.max(p.delta - pts[k - 1].delta);
        }
        if p.s == 0.0 {
            match lagrangian_ls(&joint, &identity, 0.0) {
                Ok(best) => err = err.max((best - p.l_s).abs()),
                Err(_) => err = f64::INFINITY,
            }
        }
        if p.s >= 10.0 {
            let spread = p.channels.iter().map(Channel::spread).fold(0.0, f64::max);
            err = err.max(spread - step - 1e-12);
        }
        t.error(k as u64, err);
    }
    t.finish()
}
