mod common;

use common::{random_channel, random_dist, random_instance, Naive};
use inl_core::info::{
    lagrangian_ls, lower_bound_check, optimal_q, prop1_curve, prop1_point, variational_bound_check, Channel, JointPmf,
    QSet,
};
use inl_core::rng;
use proptest::prelude::*;
use rand::Rng;

const X: [usize; 3] = [0, 1, 2];
const Y: usize = 3;
const U: [usize; 3] = [4, 5, 6];
const U4: usize = 7;

fn toy() -> JointPmf {
    JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).unwrap()
}

/// The Lagrangian from the naive oracle.
fn oracle_ls(n: &Naive, s: f64) -> f64 {
    let g = n.mi(&X, &U, &[]);
    let f = n.mi(&[X[1], X[2]], &[U[1], U[2]], &[U[0]]);
    -n.h_given(&[Y], &U) - s * (g + f)
}

#[test]
fn lagrangian_matches_oracle() {
    for seed in 0..50 {
        let inst = random_instance(seed, 3, 3);
        let n = Naive::new(&inst.joint, &inst.channels, None);
        for s in [0.0, 0.3, 2.0] {
            let got = lagrangian_ls(&inst.joint, &inst.channels, s).unwrap();
            assert!((got - oracle_ls(&n, s)).abs() < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn constant_channels_give_minus_label_entropy() {
    let joint = toy();
    let consts = vec![Channel::constant(2, &[0.2, 0.8]).unwrap(); 3];
    for s in [0.0, 1.0, 10.0] {
        assert!((lagrangian_ls(&joint, &consts, s).unwrap() + 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lagrangian_nonincreasing_in_s(seed in any::<u64>(), s in 0.0f64..5.0, ds in 0.0f64..5.0) {
        let inst = random_instance(seed, 3, 3);
        let a = lagrangian_ls(&inst.joint, &inst.channels, s).unwrap();
        let b = lagrangian_ls(&inst.joint, &inst.channels, s + ds).unwrap();
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn variational_gap_is_nonnegative(seed in any::<u64>(), s in 0.0f64..3.0) {
        let inst = random_instance(seed, 2, 3);
        let mut r = rng::stream(seed, "q", 0);
        let combiner = random_combiner(&mut r, &inst.channels);
        let q = random_q(&mut r, &inst.channels, &combiner, &inst.joint);
        let v = variational_bound_check(&inst.joint, &inst.channels, &combiner, &q, s).unwrap();
        prop_assert!(v.gap >= -1e-10, "gap {}", v.gap);
    }
}

/// Brute force over every channel triple on the grid, no symmetry
/// reduction, via the plain Lagrangian.
fn brute_force_max(joint: &JointPmf, s: f64, n: usize) -> f64 {
    let rows: Vec<Vec<f64>> = (0..=n).map(|k| vec![k as f64 / n as f64, 1.0 - k as f64 / n as f64]).collect();
    let chans: Vec<Channel> =
        rows.iter().flat_map(|a| rows.iter().map(|b| Channel::new(vec![a.clone(), b.clone()]).unwrap())).collect();
    let mut best = f64::NEG_INFINITY;
    for c1 in &chans {
        for c2 in &chans {
            for c3 in &chans {
                best = best.max(lagrangian_ls(joint, &[c1.clone(), c2.clone(), c3.clone()], s).unwrap());
            }
        }
    }
    best
}

#[test]
fn grid_search_finds_the_brute_force_maximum() {
    let mut r = rng::stream(5, "bf", 0);
    for joint in [toy(), JointPmf::new(vec![2; 4], random_dist(&mut r, 16, false)).unwrap()] {
        for s in [0.0, 0.05, 0.3, 1.0] {
            let p = prop1_point(&joint, s, 0.25).unwrap();
            let want = brute_force_max(&joint, s, 4);
            assert!((p.l_s - want).abs() < 1e-12, "s = {s}: {} vs {want}", p.l_s);
        }
    }
}

#[test]
fn boundary_points_on_the_toy() {
    let joint = toy();
    let pts = prop1_curve(&joint, &[0.0, 0.1, 1.0, 10.0], 0.1).unwrap();
    for p in &pts {
        assert!(p.identity_residual.abs() < 1e-9);
    }
    for w in pts.windows(2) {
        assert!(w[1].delta <= w[0].delta + 1e-9);
        assert!(w[1].c_s <= w[0].c_s + 1e-9);
    }
    // s = 0: nothing beats the observations themselves
    let n = Naive::new(&joint, &vec![Channel::identity(2); 3], None);
    assert!((pts[0].l_s + n.h_given(&[Y], &X)).abs() < 1e-12);
    assert!((lagrangian_ls(&joint, &vec![Channel::identity(2); 3], 0.0).unwrap() - pts[0].l_s).abs() < 1e-12);
    // s = 10: the encoders say nothing
    for ch in &pts[3].channels {
        assert!(ch.spread() <= 0.1 + 1e-12);
    }
    assert!(pts[3].delta.abs() < 1e-12);
}

#[test]
fn prop1_rejects_bad_arguments() {
    assert!(prop1_point(&toy(), -0.1, 0.1).is_err());
    assert!(prop1_point(&toy(), 1.0, 0.3).is_err());
    let two = JointPmf::noisy_copies(&[0.1, 0.2]).unwrap();
    assert!(prop1_point(&two, 1.0, 0.1).is_err());
    let big = JointPmf::new(vec![4, 4, 4, 2], vec![1.0 / 128.0; 128]).unwrap();
    assert!(prop1_point(&big, 1.0, 0.05).is_err());
}

// ---- the relay lower bound ----

fn random_combiner(r: &mut rng::Rng, channels: &[Channel]) -> Channel {
    let rows = channels[1].outputs() * channels[2].outputs();
    let out = r.random_range(1..=4);
    match r.random_range(0..4) {
        0 => bijection(channels),
        _ => {
            let sparse = r.random_bool(0.3);
            random_channel(r, rows, out, sparse)
        }
    }
}

fn bijection(channels: &[Channel]) -> Channel {
    Channel::identity(channels[1].outputs() * channels[2].outputs())
}

fn random_q(r: &mut rng::Rng, channels: &[Channel], combiner: &Channel, joint: &JointPmf) -> QSet {
    let (k1, k2, k3) = (channels[0].outputs(), channels[1].outputs(), channels[2].outputs());
    QSet {
        decoder: random_channel(r, k1 * combiner.outputs(), joint.alphabet(3), false),
        u1: random_dist(r, k1, false),
        u2: random_channel(r, k1, k2, false),
        u3: random_channel(r, k1 * k2, k3, false),
    }
}

/// Lemma 1's lower bound from the naive oracle.
fn oracle_low(n: &Naive, s: f64) -> f64 {
    -n.h_given(&[Y], &[U[0], U4])
        - s * n.mi(&[X[0]], &[U[0]], &[])
        - 2.0 * s * (n.mi(&[X[1]], &[U[1]], &[]) + n.mi(&[X[2]], &[U[2]], &[]))
        + 2.0 * s * (n.mi(&[U[1]], &[U[0]], &[]) + n.mi(&[U[2]], &[U[0], U[1]], &[]))
}

#[test]
fn lower_bound_holds_on_random_instances() {
    let mut worst = f64::INFINITY;
    for seed in 0..1000u64 {
        let inst = random_instance(seed, 3, 3);
        let mut r = rng::stream(seed, "combiner", 0);
        let combiner = random_combiner(&mut r, &inst.channels);
        let s = r.random_range(0.0..4.0);
        let lb = lower_bound_check(&inst.joint, &inst.channels, &combiner, s).unwrap();
        assert!(lb.holds, "seed {seed}: {lb:?}");
        if seed % 10 == 0 {
            let n = Naive::new(&inst.joint, &inst.channels, Some(&combiner));
            assert!((lb.l_low - oracle_low(&n, s)).abs() < 1e-11, "seed {seed}");
            assert!((lb.l_s - oracle_ls(&n, s)).abs() < 1e-11, "seed {seed}");
        }
        worst = worst.min(lb.l_s - lb.l_low);
    }
    assert!(worst >= -1e-10);
}

#[test]
fn bijective_combiner_leaves_the_chain_rule_residue() {
    for seed in 0..40u64 {
        let inst = random_instance(seed, 2, 2);
        let combiner = bijection(&inst.channels);
        let s = 0.7;
        let lb = lower_bound_check(&inst.joint, &inst.channels, &combiner, s).unwrap();
        let n = Naive::new(&inst.joint, &inst.channels, Some(&combiner));
        assert!((n.h_given(&[Y], &[U[0], U4]) - n.h_given(&[Y], &U)).abs() < 1e-12);
        // what remains is the rate terms: the sum-rate cost against the
        // per-source costs net of what the latents share
        let g = n.mi(&X, &U, &[]);
        let f = n.mi(&[X[1], X[2]], &[U[1], U[2]], &[U[0]]);
        let per_source =
            n.mi(&[X[0]], &[U[0]], &[]) + 2.0 * (n.mi(&[X[1]], &[U[1]], &[]) + n.mi(&[X[2]], &[U[2]], &[]));
        let shared = 2.0 * (n.mi(&[U[1]], &[U[0]], &[]) + n.mi(&[U[2]], &[U[0], U[1]], &[]));
        let residue = s * (per_source - shared - g - f);
        assert!(residue >= -1e-12);
        assert!(((lb.l_s - lb.l_low) - residue).abs() < 1e-11, "seed {seed}");
    }
}

#[test]
fn lower_bound_at_zero_s_is_data_processing() {
    for seed in 0..50u64 {
        let inst = random_instance(seed, 3, 3);
        let mut r = rng::stream(seed, "dp", 0);
        let combiner = random_combiner(&mut r, &inst.channels);
        let lb = lower_bound_check(&inst.joint, &inst.channels, &combiner, 0.0).unwrap();
        let n = Naive::new(&inst.joint, &inst.channels, Some(&combiner));
        assert!((lb.l_s + n.h_given(&[Y], &U)).abs() < 1e-12);
        assert!((lb.l_low + n.h_given(&[Y], &[U[0], U4])).abs() < 1e-12);
        assert!(lb.holds);
    }
}

// ---- the variational bound ----

/// `Σ p(c) KL(P(·|c) ‖ Q(·|c))` over the naive marginal `(cond.., target)`.
fn avg_kl(n: &Naive, cond: &[usize], target: usize, q: impl Fn(&[usize], usize) -> f64) -> f64 {
    let mut vars = cond.to_vec();
    vars.push(target);
    let joint = n.marginal(&vars);
    let given = n.marginal(cond);
    joint
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| {
            let c = &k[..cond.len()];
            let pc = if cond.is_empty() { 1.0 } else { given[c] };
            p * ((p / pc) / q(c, k[cond.len()])).log2()
        })
        .sum()
}

#[test]
fn optimal_q_closes_the_gap() {
    let mut worst: f64 = 0.0;
    for seed in 0..300u64 {
        let inst = random_instance(seed, 3, 3);
        let mut r = rng::stream(seed, "opt-q", 0);
        let combiner = random_combiner(&mut r, &inst.channels);
        let s = r.random_range(0.0..3.0);
        let q = optimal_q(&inst.joint, &inst.channels, &combiner).unwrap();
        let v = variational_bound_check(&inst.joint, &inst.channels, &combiner, &q, s).unwrap();
        worst = worst.max(v.gap.abs());
    }
    assert!(worst <= 1e-9, "largest gap {worst}");
}

#[test]
fn perturbed_q_opens_the_gap_by_the_divergences() {
    for seed in 0..200u64 {
        let inst = random_instance(seed, 2, 3);
        let mut r = rng::stream(seed, "pert-q", 0);
        let combiner = random_combiner(&mut r, &inst.channels);
        let s = r.random_range(0.1..3.0);
        let q = random_q(&mut r, &inst.channels, &combiner, &inst.joint);
        let v = variational_bound_check(&inst.joint, &inst.channels, &combiner, &q, s).unwrap();
        assert!(v.gap > 0.0, "seed {seed}: gap {}", v.gap);

        let n = Naive::new(&inst.joint, &inst.channels, Some(&combiner));
        let k4 = combiner.outputs();
        let k2 = inst.channels[1].outputs();
        let kl_dec = avg_kl(&n, &[U[0], U4], Y, |c, y| q.decoder.row(c[0] * k4 + c[1])[y]);
        let kl1 = avg_kl(&n, &[], U[0], |_, u| q.u1[u]);
        let kl2 = avg_kl(&n, &[U[0]], U[1], |c, u| q.u2.row(c[0])[u]);
        let kl3 = avg_kl(&n, &[U[0], U[1]], U[2], |c, u| q.u3.row(c[0] * k2 + c[1])[u]);
        let expect = kl_dec + s * kl1 + 2.0 * s * (kl2 + kl3);
        assert!((v.gap - expect).abs() < 1e-10 * expect.max(1.0), "seed {seed}: {} vs {expect}", v.gap);
    }
}

#[test]
fn variational_bound_at_zero_s_is_cross_entropy() {
    for seed in 0..50u64 {
        let inst = random_instance(seed, 2, 2);
        let mut r = rng::stream(seed, "xent", 0);
        let combiner = random_combiner(&mut r, &inst.channels);
        let q = random_q(&mut r, &inst.channels, &combiner, &inst.joint);
        let v = variational_bound_check(&inst.joint, &inst.channels, &combiner, &q, 0.0).unwrap();
        let n = Naive::new(&inst.joint, &inst.channels, Some(&combiner));
        assert!(v.l_vlow <= -n.h_given(&[Y], &[U[0], U4]) + 1e-12);
    }
}

#[test]
fn zero_prior_mass_gives_minus_infinity() {
    let joint = toy();
    let ch = vec![Channel::bsc(0.1).unwrap(); 3];
    let combiner = bijection(&ch);
    let mut q = optimal_q(&joint, &ch, &combiner).unwrap();
    q.u1 = vec![1.0, 0.0];
    let v = variational_bound_check(&joint, &ch, &combiner, &q, 1.0).unwrap();
    assert_eq!(v.l_vlow, f64::NEG_INFINITY);
    assert_eq!(v.gap, f64::INFINITY);
}

#[test]
fn invalid_q_rejected() {
    let joint = toy();
    let ch = vec![Channel::bsc(0.1).unwrap(); 3];
    let combiner = bijection(&ch);
    let good = optimal_q(&joint, &ch, &combiner).unwrap();
    let bad_prior = QSet { u1: vec![0.7, 0.7], ..good.clone() };
    assert!(variational_bound_check(&joint, &ch, &combiner, &bad_prior, 1.0).is_err());
    let bad_shape = QSet { u2: Channel::identity(3), ..good };
    assert!(variational_bound_check(&joint, &ch, &combiner, &bad_shape, 1.0).is_err());
}
