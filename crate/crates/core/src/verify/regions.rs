//! Rate-region checks against grid searches and capacity perturbations.

use rand::Rng as _;

use super::gen;
use super::{CheckResult, Tally};
use crate::error::Result;
use crate::graph::DagNetwork;
use crate::info::{
    five_node_region_check, fme_equivalence_test, sum_region_check, theorem1_feasible, theorem1_region,
    FiveNodeCapacities, FiveNodeTerms, RateTuple,
};
use crate::rng;

const SUITE: &str = "regions";

fn r1_min(t: &FiveNodeTerms, r2: f64, r3: f64) -> f64 {
    [0.0, t.a, t.d - r2, t.e - r3, t.g - r2 - r3].into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Least total capacity over grid points `(R_2, R_3)`: every link carries
/// exactly what crosses it, so a split costs `R_1 + 2R_2 + 2R_3` with the
/// least admissible `R_1`.
pub fn grid_split_cost(t: &FiveNodeTerms, h: f64) -> f64 {
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

/// Is there a grid point `(R_2, R_3)` with an admissible `R_1` under the
/// given capacities? `tol` loosens every constraint.
pub fn grid_feasible(t: &FiveNodeTerms, caps: &FiveNodeCapacities, h: f64, tol: f64) -> bool {
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

fn fme_instance(seed: u64, i: u64, h: f64) -> Result<(f64, bool)> {
    let inst = gen::discrete(rng::derive_seed(seed, "fme", i), 3, 2);
    let eq = fme_equivalence_test(&inst.joint, &inst.channels)?;
    let cost = grid_split_cost(&eq.terms, h);
    let below = sum_region_check(&inst.joint, &inst.channels, eq.direct - 1e-6)?.feasible;
    let at = sum_region_check(&inst.joint, &inst.channels, eq.direct)?.feasible;
    let ok = eq.passed && cost >= eq.direct - 1e-9 && cost <= eq.direct + 6.0 * h && !below && at;
    Ok(((cost - eq.direct).abs().max((eq.projected - eq.direct).abs()), ok))
}

/// The direct sum condition against the projection of the full system and
/// against a grid search over capacity splits. The error is the gap
/// between the grid's cheapest split and the threshold.
pub fn fme_equivalence_sweep(seed: u64, instances: u64, h: f64) -> CheckResult {
    let mut t = Tally::new(SUITE, "fme_equivalence", 6.0 * h);
    for i in 0..instances {
        match fme_instance(seed, i, h) {
            Ok((err, ok)) => t.outcome(i, err, ok),
            Err(e) => t.record(i, Err(e)),
        }
    }
    t.finish()
}

fn monotone_instance(seed: u64, i: u64) -> Result<f64> {
    let inst = gen::discrete(rng::derive_seed(seed, "monotone", i), 3, 3);
    let mut r = rng::stream(seed, "monotone", i);
    let dag = gen::dag(&mut r);
    let rates = RateTuple::new((0..3).map(|_| r.random_range(0.0..2.0)).collect())?;
    let before = theorem1_feasible(&inst.joint, &inst.channels, &dag, &rates)?.feasible;
    let region_before = theorem1_region(&inst.joint, &inst.channels, &dag)?.feasible;
    let mut flips = 0;
    for e in 0..dag.edges().len() {
        let bigger = gen::with_extra_capacity(&dag, e, r.random_range(0.0..1.0));
        if before && !theorem1_feasible(&inst.joint, &inst.channels, &bigger, &rates)?.feasible {
            flips += 1;
        }
        if region_before && !theorem1_region(&inst.joint, &inst.channels, &bigger)?.feasible {
            flips += 1;
        }
    }
    Ok(flips as f64)
}

/// Raising one edge capacity never turns a feasible rate tuple, or a
/// feasible region, infeasible. The error counts such flips.
pub fn theorem1_monotone(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "theorem1_monotone", 0.0);
    for i in 0..instances {
        t.record(i, monotone_instance(seed, i));
    }
    t.finish()
}

fn grid_oracle_instance(seed: u64, i: u64, h: f64) -> Result<bool> {
    let inst = gen::discrete(rng::derive_seed(seed, "five-node", i), 2, 2);
    let t = FiveNodeTerms::compute(&inst.joint, &inst.channels)?;
    let mut r = rng::stream(seed, "five-node-caps", i);
    let mut near = |v: f64| (v * r.random_range(0.9..1.5) + r.random_range(-0.02..0.1)).max(0.0);
    let caps = FiveNodeCapacities { c15: near(t.g - t.f), c24: near(t.b), c34: near(t.f - t.b), c45: near(t.f) };
    let v = five_node_region_check(&inst.joint, &inst.channels, &caps)?;
    Ok(if v.feasible {
        grid_feasible(&t, &caps, h, 2.0 * h)
    } else {
        !grid_feasible(&t, &caps, h, 0.0) && !v.violated.is_empty()
    })
}

/// The exact five-node verdict against a grid over `(R_2, R_3)`: feasible
/// regions have a grid point within `2h`, infeasible ones have none.
pub fn five_node_grid_oracle(seed: u64, instances: u64, h: f64) -> CheckResult {
    let mut t = Tally::new(SUITE, "five_node_grid", 0.0);
    for i in 0..instances {
        t.record(i, grid_oracle_instance(seed, i, h).map(|ok| if ok { 0.0 } else { 1.0 }));
    }
    t.finish()
}

/// The five-node specialisation agrees with the general cut-set region on
/// the same graph.
pub fn five_node_matches_general(seed: u64, instances: u64) -> CheckResult {
    let mut t = Tally::new(SUITE, "five_node_vs_general", 0.0);
    for i in 0..instances {
        let res = (|| {
            let inst = gen::discrete(rng::derive_seed(seed, "five-general", i), 2, 2);
            let mut r = rng::stream(seed, "five-general-caps", i);
            let c: Vec<f64> = (0..4).map(|_| r.random_range(0.0..2.5)).collect();
            let caps = FiveNodeCapacities { c15: c[0], c24: c[1], c34: c[2], c45: c[3] };
            let dag = DagNetwork::five_node(c[0], c[1], c[2], c[3])?;
            let five = five_node_region_check(&inst.joint, &inst.channels, &caps)?.feasible;
            let general = theorem1_region(&inst.joint, &inst.channels, &dag)?.feasible;
            Ok(if five == general { 0.0 } else { 1.0 })
        })();
        t.record(i, res);
    }
    t.finish()
}
