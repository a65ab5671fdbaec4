//! Seeded invariant sweeps behind `inl verify`.
//!
//! Every check runs a fixed number of instances derived from one root seed
//! and reports the worst error it saw, the tolerance, and the instance
//! indices that failed. Nothing time-dependent goes into the report, so the
//! CSV is byte-identical across runs.

mod bandwidth;
mod bounds;
pub mod gen;
mod gradients;
mod regions;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub use bandwidth::{
    bandwidth_homogeneity, fl_aggregate_examples, fl_zero_step_fixed_point, sl_handoff_bit_exact,
    sl_matches_inl_single_client, table1_cells,
};
pub use bounds::{
    entropy_laws, lagrangian_monotone, lemma1_sweep, lemma2_optimal, lemma2_perturbed, perturb_q, prop1_boundary,
    prop1_toy, random_combiner, PROP1_S,
};
pub use gradients::{
    bits_symmetry, decision_locality, determinism, kl_monte_carlo, nn_finite_differences, objective_finite_differences,
    smoke_losses, smoke_training, split_backprop, split_backprop_instance, subvector_conservation,
    zero_rate_is_identity,
};
pub use regions::{
    five_node_grid_oracle, five_node_matches_general, fme_equivalence_sweep, grid_feasible, grid_split_cost,
    theorem1_monotone,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Gradients,
    Bounds,
    Regions,
    Bandwidth,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Bounds => "bounds",
            Suite::Regions => "regions",
            Suite::Bandwidth => "bandwidth",
            Suite::All => "all",
        }
    }

    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Gradients, Suite::Bounds, Suite::Regions, Suite::Bandwidth],
            s => vec![s],
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradients" => Ok(Suite::Gradients),
            "bounds" => Ok(Suite::Bounds),
            "regions" => Ok(Suite::Regions),
            "bandwidth" => Ok(Suite::Bandwidth),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidArgument(format!(
                "unknown suite {other:?}; expected gradients, bounds, regions, bandwidth or all"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub check: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Instance indices that failed; rerun one with the same root seed.
    pub failures: Vec<u64>,
}

/// Accumulates per-instance errors for one check.
#[derive(Debug)]
pub(crate) struct Tally {
    suite: &'static str,
    check: &'static str,
    tolerance: f64,
    instances: usize,
    max_error: f64,
    failures: Vec<u64>,
}

impl Tally {
    pub(crate) fn new(suite: &'static str, check: &'static str, tolerance: f64) -> Self {
        Self { suite, check, tolerance, instances: 0, max_error: 0.0, failures: Vec::new() }
    }

    /// Record an error measured against the tolerance.
    pub(crate) fn error(&mut self, instance: u64, err: f64) {
        self.outcome(instance, err, err <= self.tolerance);
    }

    /// Record an error with a separately decided verdict.
    pub(crate) fn outcome(&mut self, instance: u64, err: f64, ok: bool) {
        self.instances += 1;
        // NaN poisons the maximum on purpose
        if self.instances == 1 || err.is_nan() || err > self.max_error {
            self.max_error = err;
        }
        if !ok {
            self.failures.push(instance);
        }
    }

    /// A module error counts as a failure of that instance.
    pub(crate) fn record(&mut self, instance: u64, r: Result<f64>) {
        match r {
            Ok(err) => self.error(instance, err),
            Err(e) => {
                log::warn!("{}/{} instance {instance}: {e}", self.suite, self.check);
                self.outcome(instance, f64::INFINITY, false);
            }
        }
    }

    pub(crate) fn finish(self) -> CheckResult {
        CheckResult {
            suite: self.suite,
            check: self.check,
            instances: self.instances,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed: self.instances > 0 && self.failures.is_empty(),
            failures: self.failures,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

pub const REPORT_HEADER: &str = "suite,check,instances,max_error,tolerance,passed,failures";

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// One line per check; failing instance indices are space-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for c in &self.checks {
            let failures: Vec<String> = c.failures.iter().map(u64::to_string).collect();
            writeln!(
                out,
                "{},{},{},{:e},{:e},{},{}",
                c.suite,
                c.check,
                c.instances,
                c.max_error,
                c.tolerance,
                c.passed,
                failures.join(" ")
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Run every check of `suite` from root seed `seed`.
pub fn run(suite: Suite, seed: u64) -> Result<Report> {
    let mut checks = Vec::new();
    for s in suite.members() {
        log::info!("running suite {}", s.as_str());
        match s {
            Suite::Gradients => {
                checks.push(nn_finite_differences(seed, 120));
                checks.push(split_backprop(seed, 50));
                checks.push(objective_finite_differences(seed, 24));
                checks.push(subvector_conservation(seed, 40));
                checks.push(bits_symmetry(seed, 40));
                checks.push(decision_locality(seed, 40));
                checks.push(zero_rate_is_identity(seed, 20));
                checks.push(determinism(seed, 8));
                checks.push(kl_monte_carlo(seed, 6));
                checks.push(smoke_training(seed));
            }
            Suite::Bounds => {
                checks.push(entropy_laws(seed, 300));
                checks.push(lagrangian_monotone(seed, 300));
                checks.push(lemma1_sweep(seed, 1000));
                checks.push(lemma2_optimal(seed, 1000));
                checks.push(lemma2_perturbed(seed, 50, 100));
                checks.push(prop1_boundary(0.05));
            }
            Suite::Regions => {
                checks.push(fme_equivalence_sweep(seed, 200, 1e-3));
                checks.push(theorem1_monotone(seed, 200));
                checks.push(five_node_grid_oracle(seed, 200, 1e-3));
                checks.push(five_node_matches_general(seed, 100));
            }
            Suite::Bandwidth => {
                checks.push(table1_cells());
                checks.push(bandwidth_homogeneity(seed, 200));
                checks.push(fl_aggregate_examples());
                checks.push(fl_zero_step_fixed_point(seed, 10));
                checks.push(sl_handoff_bit_exact(seed, 50));
                checks.push(sl_matches_inl_single_client(seed, 3));
            }
            Suite::All => unreachable!("expanded by members()"),
        }
    }
    Ok(Report { checks })
}
