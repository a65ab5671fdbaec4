mod common;

use common::{random_channel, random_dist, random_instance, Naive};
use inl_core::graph::{DagNetwork, Edge};
use inl_core::info::{
    achievable_relevance, binary_entropy, compose, five_node_region_check, fme_equivalence_test, sum_region_check,
    theorem1_feasible, theorem1_region, Channel, FiveNodeCapacities, FiveNodeTerms, JointPmf, Pmf, RateTuple,
};
use inl_core::rng;
use proptest::prelude::*;
use rand::Rng;

const X: [usize; 3] = [0, 1, 2];
const Y: usize = 3;
const U: [usize; 3] = [4, 5, 6];

#[test]
fn bsc_mutual_information_matches_closed_form() {
    let joint = JointPmf::new(vec![2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let rel = achievable_relevance(&joint, &[Channel::bsc(0.11).unwrap()]).unwrap();
    // 1 − h₂(0.11) written out
    let h2 = -(0.11f64 * 0.11f64.log2() + 0.89 * 0.89f64.log2());
    assert!((rel - (1.0 - h2)).abs() < 1e-12);
    assert!((rel - 0.5002).abs() < 5e-4);
    assert!((binary_entropy(0.11) - h2).abs() < 1e-15);
}

#[test]
fn mutual_information_matches_naive_enumeration() {
    for seed in 0..100 {
        let inst = random_instance(seed, 3, 3);
        let c = compose(&inst.joint, &inst.channels).unwrap();
        let naive = Naive::new(&inst.joint, &inst.channels, None);
        let sets: [(&[usize], &[usize], &[usize]); 5] = [
            (&[U[0]], &[X[0]], &[U[1], U[2]]),
            (&[X[1], X[2]], &[U[1], U[2]], &[U[0]]),
            (&[Y], &U, &[]),
            (&X, &[Y], &[]),
            (&[U[2]], &[U[0], U[1]], &[Y]),
        ];
        for (a, b, cond) in sets {
            let got = c.pmf().mutual_information(a, b, cond).unwrap();
            let want = naive.mi(a, b, cond);
            assert!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
        }
    }
}

fn random_pmf(seed: u64) -> Pmf {
    let mut r = rng::stream(seed, "pmf", 0);
    let dims: Vec<usize> = (0..4).map(|_| r.random_range(1..=3)).collect();
    let size = dims.iter().product();
    Pmf::new(dims, random_dist(&mut r, size, true)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn entropy_laws(seed in any::<u64>()) {
        let p = random_pmf(seed);
        for v in 0..4 {
            prop_assert!(p.entropy(&[v]).unwrap() >= 0.0);
        }
        // conditioning never increases entropy
        prop_assert!(p.conditional_entropy(&[0], &[1, 2]).unwrap() <= p.conditional_entropy(&[0], &[1]).unwrap() + 1e-12);
        prop_assert!(p.conditional_entropy(&[0], &[1]).unwrap() <= p.entropy(&[0]).unwrap() + 1e-12);
        // chain rules
        let h01 = p.entropy(&[0, 1]).unwrap();
        let chain = p.entropy(&[0]).unwrap() + p.conditional_entropy(&[1], &[0]).unwrap();
        prop_assert!((h01 - chain).abs() < 1e-12);
        let i = p.mutual_information(&[0], &[1, 2], &[]).unwrap();
        let split = p.mutual_information(&[0], &[1], &[]).unwrap() + p.mutual_information(&[0], &[2], &[1]).unwrap();
        prop_assert!((i - split).abs() < 1e-12);
        prop_assert!(p.mutual_information(&[0], &[3], &[1]).unwrap() >= -1e-12);
    }
}

#[test]
fn relevance_examples() {
    for seed in 0..30 {
        let inst = random_instance(seed, 3, 3);
        let naive = Naive::new(&inst.joint, &inst.channels, None);
        let got = achievable_relevance(&inst.joint, &inst.channels).unwrap();
        assert!((got - naive.mi(&[Y], &U, &[])).abs() < 1e-12);

        let ids: Vec<Channel> = (0..3).map(|j| Channel::identity(inst.joint.alphabet(j))).collect();
        let full = achievable_relevance(&inst.joint, &ids).unwrap();
        assert!((full - inst.joint.pmf().mutual_information(&X, &[Y], &[]).unwrap()).abs() < 1e-12);

        let consts: Vec<Channel> =
            (0..3).map(|j| Channel::constant(inst.joint.alphabet(j), &[0.3, 0.7]).unwrap()).collect();
        assert!(achievable_relevance(&inst.joint, &consts).unwrap().abs() < 1e-12);
    }
}

// ---- the general conditions ----

#[test]
fn constant_channels_need_no_rate() {
    let joint = JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).unwrap();
    let consts = vec![Channel::constant(2, &[0.5, 0.5]).unwrap(); 3];
    let zero = RateTuple::new(vec![0.0; 3]).unwrap();
    for caps in [[0.0; 4], [1.0, 0.0, 2.0, 0.5], [1e6; 4]] {
        let dag = DagNetwork::five_node(caps[0], caps[1], caps[2], caps[3]).unwrap();
        assert!(theorem1_feasible(&joint, &consts, &dag, &zero).unwrap().feasible);
        assert!(theorem1_region(&joint, &consts, &dag).unwrap().feasible);
    }
}

#[test]
fn identity_channel_needs_the_source_entropy() {
    let joint = JointPmf::new(vec![3, 2], vec![0.1, 0.2, 0.3, 0.1, 0.05, 0.25]).unwrap();
    let h_x: f64 = [0.3f64, 0.4, 0.3].iter().map(|p| -p * p.log2()).sum();
    let dag = DagNetwork::star(1, 100.0).unwrap();
    let ch = [Channel::identity(3)];
    let short = theorem1_feasible(&joint, &ch, &dag, &RateTuple::new(vec![h_x - 1e-6]).unwrap()).unwrap();
    assert!(!short.feasible);
    assert!((short.violations[0].bound - h_x).abs() < 1e-12);
    assert!(theorem1_feasible(&joint, &ch, &dag, &RateTuple::new(vec![h_x]).unwrap()).unwrap().feasible);
}

#[test]
fn zero_capacity_cut_blocks_a_source() {
    let joint = JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).unwrap();
    let ids = vec![Channel::identity(2); 3];
    let dag = DagNetwork::five_node(5.0, 0.0, 5.0, 5.0).unwrap();
    let rates = RateTuple::new(vec![1.0, 1.0, 1.0]).unwrap();
    let v = theorem1_feasible(&joint, &ids, &dag, &rates).unwrap();
    assert!(!v.feasible);
    assert!(v.violations.iter().any(|c| c.subset == vec![2]));
    assert!(!theorem1_region(&joint, &ids, &dag).unwrap().feasible);
}

fn random_dag(r: &mut rng::Rng) -> DagNetwork {
    let kind = r.random_range(0..3);
    let mut cap = || r.random_range(0.0..3.0);
    match kind {
        0 => DagNetwork::five_node(cap(), cap(), cap(), cap()).unwrap(),
        1 => DagNetwork::star(3, cap()).unwrap(),
        _ => {
            // sources 1-3, relays 4 and 5, decision 6
            let edges = vec![
                Edge { from: 1, to: 4, capacity: cap() },
                Edge { from: 2, to: 4, capacity: cap() },
                Edge { from: 3, to: 5, capacity: cap() },
                Edge { from: 4, to: 5, capacity: cap() },
                Edge { from: 4, to: 6, capacity: cap() },
                Edge { from: 5, to: 6, capacity: cap() },
            ];
            DagNetwork::new(6, edges, [1, 2, 3]).unwrap()
        }
    }
}

fn with_capacity(dag: &DagNetwork, edge: usize, extra: f64) -> DagNetwork {
    let mut edges = dag.edges().to_vec();
    edges[edge].capacity += extra;
    DagNetwork::new(dag.num_nodes(), edges, dag.sources().iter().copied()).unwrap()
}

#[test]
fn theorem1_is_monotone_in_capacity() {
    let mut flips = 0;
    for seed in 0..250u64 {
        let inst = random_instance(seed, 3, 3);
        let mut r = rng::stream(seed, "monotone", 0);
        let dag = random_dag(&mut r);
        let rates = RateTuple::new((0..3).map(|_| r.random_range(0.0..2.0)).collect()).unwrap();
        let before = theorem1_feasible(&inst.joint, &inst.channels, &dag, &rates).unwrap();
        let region_before = theorem1_region(&inst.joint, &inst.channels, &dag).unwrap();
        for e in 0..dag.edges().len() {
            let bigger = with_capacity(&dag, e, r.random_range(0.0..1.0));
            let after = theorem1_feasible(&inst.joint, &inst.channels, &bigger, &rates).unwrap();
            assert!(!before.feasible || after.feasible, "seed {seed}, edge {e}");
            let region_after = theorem1_region(&inst.joint, &inst.channels, &bigger).unwrap();
            assert!(!region_before.feasible || region_after.feasible, "seed {seed}, edge {e}");
            flips += usize::from(!region_before.feasible && region_after.feasible);
        }
    }
    assert!(flips > 0, "no instance became feasible; the sweep is too easy");
}

#[test]
fn theorem1_witness_satisfies_the_pointwise_check() {
    for seed in 0..100u64 {
        let inst = random_instance(seed, 3, 2);
        let mut r = rng::stream(seed, "witness", 0);
        let dag = random_dag(&mut r);
        let v = theorem1_region(&inst.joint, &inst.channels, &dag).unwrap();
        if let Some(rates) = v.rates {
            let rates = RateTuple::new(rates.iter().map(|x| x.max(0.0)).collect()).unwrap();
            assert!(theorem1_feasible(&inst.joint, &inst.channels, &dag, &rates).unwrap().feasible, "seed {seed}");
        }
    }
}

// ---- the five-node network ----

struct Terms {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
    g: f64,
}

/// The seven bounds from the naive oracle.
fn oracle_terms(n: &Naive) -> Terms {
    let (x, u) = (X, U);
    Terms {
        a: n.mi(&[u[0]], &[x[0]], &[u[1], u[2]]),
        b: n.mi(&[u[1]], &[x[1]], &[u[0], u[2]]),
        c: n.mi(&[u[2]], &[x[2]], &[u[0], u[1]]),
        d: n.mi(&[x[0], x[1]], &[u[0], u[1]], &[u[2]]),
        e: n.mi(&[x[0], x[2]], &[u[0], u[2]], &[u[1]]),
        f: n.mi(&[x[1], x[2]], &[u[1], u[2]], &[u[0]]),
        g: n.mi(&x, &u, &[]),
    }
}

fn r1_min(t: &Terms, r2: f64, r3: f64) -> f64 {
    [0.0, t.a, t.d - r2, t.e - r3, t.g - r2 - r3].into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Grid over `(R_2, R_3)` with the least admissible `R_1`; `tol` loosens
/// every constraint.
fn grid_feasible(t: &Terms, caps: &FiveNodeCapacities, h: f64, tol: f64) -> bool {
    let n2 = (caps.c24 / h).floor() as usize;
    let n3 = (caps.c34 / h).floor() as usize;
    for i in 0..=n2 {
        let r2 = i as f64 * h;
        if r2 < t.b - tol {
            continue;
        }
        for k in 0..=n3 {
            let r3 = k as f64 * h;
            if r3 >= t.c - tol
                && r2 + r3 >= t.f - tol
                && r2 + r3 <= caps.c45 + tol
                && r1_min(t, r2, r3) <= caps.c15 + tol
            {
                return true;
            }
        }
    }
    false
}

#[test]
fn five_node_check_agrees_with_grid_oracle() {
    let h = 1e-3;
    let (mut yes, mut no) = (0, 0);
    for seed in 0..200u64 {
        let inst = random_instance(seed, 2, 2);
        let t = oracle_terms(&Naive::new(&inst.joint, &inst.channels, None));
        let mut r = rng::stream(seed, "caps", 0);
        let mut near = |v: f64| (v * r.random_range(0.9..1.5) + r.random_range(-0.02..0.1)).max(0.0);
        let caps = FiveNodeCapacities { c15: near(t.g - t.f), c24: near(t.b), c34: near(t.f - t.b), c45: near(t.f) };
        let v = five_node_region_check(&inst.joint, &inst.channels, &caps).unwrap();
        if v.feasible {
            yes += 1;
            assert!(grid_feasible(&t, &caps, h, 2.0 * h), "seed {seed}: grid finds no point within 2h");
            let w = v.rates.unwrap();
            assert!(w[0] <= caps.c15 + 1e-9 && w[1] <= caps.c24 + 1e-9 && w[2] <= caps.c34 + 1e-9);
            assert!(w[0] + w[1] + w[2] >= t.g - 1e-9);
        } else {
            no += 1;
            assert!(!grid_feasible(&t, &caps, h, 0.0), "seed {seed}: grid found a feasible point");
            assert!(!v.violated.is_empty());
        }
    }
    assert!(yes > 20 && no > 20, "unbalanced sweep: {yes} feasible, {no} infeasible");
}

#[test]
fn five_node_examples() {
    let joint = JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).unwrap();
    let ch = vec![Channel::bsc(0.1).unwrap(), Channel::bsc(0.2).unwrap(), Channel::identity(2)];
    let huge = FiveNodeCapacities { c15: 1e6, c24: 1e6, c34: 1e6, c45: 1e6 };
    assert!(five_node_region_check(&joint, &ch, &huge).unwrap().feasible);
    let t = FiveNodeTerms::compute(&joint, &ch).unwrap();
    let starved = FiveNodeCapacities { c45: t.f - 1e-3, ..huge };
    let v = five_node_region_check(&joint, &ch, &starved).unwrap();
    assert!(!v.feasible);
    assert!(v.violated.contains(&"C45 >= R2 + R3".to_string()));
    assert!(v.violated.contains(&"R2 + R3 >= f".to_string()));
}

#[test]
fn five_node_check_matches_general_conditions() {
    for seed in 0..100u64 {
        let inst = random_instance(seed, 2, 2);
        let mut r = rng::stream(seed, "caps-general", 0);
        let c: Vec<f64> = (0..4).map(|_| r.random_range(0.0..2.5)).collect();
        let caps = FiveNodeCapacities { c15: c[0], c24: c[1], c34: c[2], c45: c[3] };
        let dag = DagNetwork::five_node(c[0], c[1], c[2], c[3]).unwrap();
        let five = five_node_region_check(&inst.joint, &inst.channels, &caps).unwrap().feasible;
        let general = theorem1_region(&inst.joint, &inst.channels, &dag).unwrap().feasible;
        assert_eq!(five, general, "seed {seed}");
    }
}

/// Least total capacity any split needs, by grid over `(R_2, R_3)`: each
/// link carries exactly what crosses it, so the cost is `R_1 + 2R_2 + 2R_3`.
fn grid_split_cost(t: &Terms, h: f64) -> f64 {
    let top = (t.g / h).ceil() as usize + 1;
    let mut best = f64::INFINITY;
    for i in 0..=top {
        let r2 = i as f64 * h;
        if r2 < t.b {
            continue;
        }
        for k in 0..=top {
            let r3 = k as f64 * h;
            if r3 < t.c || r2 + r3 < t.f {
                continue;
            }
            best = best.min(r1_min(t, r2, r3) + 2.0 * (r2 + r3));
        }
    }
    best
}

#[test]
fn sum_condition_equals_capacity_split_projection() {
    let h = 1e-3;
    for seed in 0..200u64 {
        let inst = random_instance(1000 + seed, 3, 2);
        let eq = fme_equivalence_test(&inst.joint, &inst.channels).unwrap();
        assert!(eq.passed, "seed {seed}: {eq:?}");
        let t = oracle_terms(&Naive::new(&inst.joint, &inst.channels, None));
        assert!((eq.direct - (t.g + t.f)).abs() < 1e-12);
        let cost = grid_split_cost(&t, h);
        assert!(cost >= eq.direct - 1e-9, "seed {seed}: grid beats the threshold, {cost} < {}", eq.direct);
        assert!(cost <= eq.direct + 6.0 * h, "seed {seed}: grid cost {cost} far above {}", eq.direct);

        let below = sum_region_check(&inst.joint, &inst.channels, eq.direct - 1e-6).unwrap();
        assert!(!below.feasible);
        assert!(sum_region_check(&inst.joint, &inst.channels, eq.direct).unwrap().feasible);
    }
}

#[test]
fn sum_threshold_examples() {
    let joint = JointPmf::noisy_copies(&[0.1, 0.2, 0.3]).unwrap();
    let consts = vec![Channel::constant(2, &[0.5, 0.5]).unwrap(); 3];
    let v = sum_region_check(&joint, &consts, 0.0).unwrap();
    assert!(v.feasible && v.threshold.abs() < 1e-12);

    let ids = vec![Channel::identity(2); 3];
    let n = Naive::new(&joint, &ids, None);
    let expect = n.h(&X) + n.h_given(&[X[1], X[2]], &[X[0]]);
    let v = sum_region_check(&joint, &ids, 0.0).unwrap();
    assert!((v.threshold - expect).abs() < 1e-12);
}

#[test]
fn relay_network_rejects_overlapping_channels() {
    let joint = JointPmf::noisy_copies(&[0.1, 0.2]).unwrap();
    let mut r = rng::stream(0, "x", 0);
    let ch = vec![random_channel(&mut r, 2, 2, false)];
    assert!(compose(&joint, &ch).is_err());
    assert!(FiveNodeTerms::compute(&joint, &[ch[0].clone(), ch[0].clone()]).is_err());
}
