//! Achievable-rate checks: the general cut-set/Berger-Tung conditions on any
//! DAG, and the five-node network with its sum-capacity reduction.

use serde::{Deserialize, Serialize};

use super::fme::{self, Ineq, Outcome};
use super::pmf::{compose, Channel, Composed, JointPmf};
use crate::error::{Error, Result};
use crate::graph::DagNetwork;

/// Nonnegative rates `R_1..R_J` in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RateTuple(Vec<f64>);

impl RateTuple {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::InvalidArgument(format!("rate {r} is negative or not finite")));
        }
        Ok(Self(rates))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RateTuple {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RateTuple> for Vec<f64> {
    fn from(r: RateTuple) -> Self {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `Σ_{j∈S} R_j ≥ I(U_S; X_S | U_{S^c})`
    Rate,
    /// `Σ_{j∈S∩J} R_j ≤ C(S)`
    Cut,
}

/// One constraint, as `lhs ≥ bound` for rate rows and `lhs ≤ bound` for cuts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub family: Family,
    /// Source indices for rate rows, node ids for cuts.
    pub subset: Vec<usize>,
    pub lhs: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Verdict {
    pub feasible: bool,
    pub violations: Vec<Constraint>,
}

/// The rate constraints for the sources of `dag` in ascending id order.
struct Theorem1Rows {
    rates: Vec<(Vec<usize>, f64)>,
    cuts: Vec<(Vec<usize>, Vec<usize>, f64)>,
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << n)).map(move |mask| (1..=n).filter(|j| mask & (1 << (j - 1)) != 0).collect())
}

fn theorem1_rows(c: &Composed, dag: &DagNetwork) -> Result<Theorem1Rows> {
    let sources: Vec<usize> = dag.sources().iter().copied().collect();
    if sources.len() != c.num_sources() {
        return Err(Error::Shape(format!("{} channels for a graph with {} sources", c.num_sources(), sources.len())));
    }
    let all = c.all_sources();
    let rates = subsets(all.len())
        .map(|s| {
            let rest: Vec<usize> = all.iter().copied().filter(|j| !s.contains(j)).collect();
            let bound = c.mi(&c.us(&s), &c.xs(&s), &c.us(&rest));
            (s, bound)
        })
        .collect();
    let mut cuts = Vec::new();
    for cut in dag.all_cuts() {
        let inside: Vec<usize> =
            sources.iter().enumerate().filter(|(_, k)| cut.subset.contains(k)).map(|(i, _)| i + 1).collect();
        if inside.is_empty() {
            continue;
        }
        cuts.push((cut.subset.iter().copied().collect(), inside, dag.cut_capacity(&cut)?));
    }
    Ok(Theorem1Rows { rates, cuts })
}

/// Check the given rates against both constraint families.
pub fn theorem1_feasible(
    joint: &JointPmf,
    channels: &[Channel],
    dag: &DagNetwork,
    rates: &RateTuple,
) -> Result<Theorem1Verdict> {
    let c = compose(joint, channels)?;
    if rates.as_slice().len() != c.num_sources() {
        return Err(Error::Shape(format!("{} rates for {} sources", rates.as_slice().len(), c.num_sources())));
    }
    let rows = theorem1_rows(&c, dag)?;
    let r = rates.as_slice();
    let sum = |set: &[usize]| set.iter().map(|&j| r[j - 1]).sum::<f64>();
    let mut violations = Vec::new();
    for (s, bound) in rows.rates {
        let lhs = sum(&s);
        if lhs < bound - fme::TOL {
            violations.push(Constraint { family: Family::Rate, subset: s, lhs, bound });
        }
    }
    for (nodes, inside, cap) in rows.cuts {
        let lhs = sum(&inside);
        if lhs > cap + fme::TOL {
            violations.push(Constraint { family: Family::Cut, subset: nodes, lhs, bound: cap });
        }
    }
    Ok(Theorem1Verdict { feasible: violations.is_empty(), violations })
}

/// Outcome of deciding whether any nonnegative rates satisfy a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub feasible: bool,
    /// A witness when feasible.
    pub rates: Option<Vec<f64>>,
    /// The constraints an infeasibility certificate combines.
    pub violated: Vec<String>,
}

fn decide(names: &[String], rows: Vec<(Vec<i64>, f64)>, num_vars: usize) -> RegionVerdict {
    match fme::solve(&fme::system(rows), num_vars) {
        Outcome::Feasible(x) => RegionVerdict { feasible: true, rates: Some(x), violated: Vec::new() },
        Outcome::Infeasible(cert) => RegionVerdict {
            feasible: false,
            rates: None,
            violated: cert.origin.iter().zip(names).filter(|(m, _)| **m > 0.0).map(|(_, n)| n.clone()).collect(),
        },
    }
}

fn nonnegative_rows(n: usize, names: &mut Vec<String>, rows: &mut Vec<(Vec<i64>, f64)>) {
    for j in 0..n {
        let mut c = vec![0; n];
        c[j] = -1;
        names.push(format!("R{} >= 0", j + 1));
        rows.push((c, 0.0));
    }
}

/// Do nonnegative rates exist that satisfy both families on `dag`?
pub fn theorem1_region(joint: &JointPmf, channels: &[Channel], dag: &DagNetwork) -> Result<RegionVerdict> {
    let c = compose(joint, channels)?;
    let n = c.num_sources();
    let t = theorem1_rows(&c, dag)?;
    let (mut names, mut rows) = (Vec::new(), Vec::new());
    let indicator =
        |set: &[usize], sign: i64| (1..=n).map(|j| if set.contains(&j) { sign } else { 0 }).collect::<Vec<_>>();
    for (s, bound) in &t.rates {
        names.push(format!("sum R{s:?} >= I(U;X|U^c) = {bound}"));
        rows.push((indicator(s, -1), -bound));
    }
    for (nodes, inside, cap) in &t.cuts {
        names.push(format!("sum R{inside:?} <= C({nodes:?}) = {cap}"));
        rows.push((indicator(inside, 1), *cap));
    }
    nonnegative_rows(n, &mut names, &mut rows);
    Ok(decide(&names, rows, n))
}

/// `I(U_1..U_J; Y)`.
pub fn achievable_relevance(joint: &JointPmf, channels: &[Channel]) -> Result<f64> {
    let c = compose(joint, channels)?;
    Ok(c.mi(&c.us(&c.all_sources()), &[c.y()], &[]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNodeCapacities {
    pub c15: f64,
    pub c24: f64,
    pub c34: f64,
    pub c45: f64,
}

impl FiveNodeCapacities {
    pub fn sum(&self) -> f64 {
        self.c15 + self.c24 + self.c34 + self.c45
    }
}

/// The mutual-information bounds of the five-node region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNodeTerms {
    /// `I(U_1; X_1 | U_2, U_3)`
    pub a: f64,
    /// `I(U_2; X_2 | U_1, U_3)`
    pub b: f64,
    /// `I(U_3; X_3 | U_1, U_2)`
    pub c: f64,
    /// `I(X_1, X_2; U_1, U_2 | U_3)`
    pub d: f64,
    /// `I(X_1, X_3; U_1, U_3 | U_2)`
    pub e: f64,
    /// `I(X_2, X_3; U_2, U_3 | U_1)`
    pub f: f64,
    /// `I(X_1, X_2, X_3; U_1, U_2, U_3)`
    pub g: f64,
}

impl FiveNodeTerms {
    pub fn compute(joint: &JointPmf, channels: &[Channel]) -> Result<Self> {
        if joint.num_sources() != 3 {
            return Err(Error::Shape(format!(
                "the five-node network has 3 sources, the pmf has {}",
                joint.num_sources()
            )));
        }
        let c = compose(joint, channels)?;
        let mi = |s: &[usize], rest: &[usize]| c.mi(&c.us(s), &c.xs(s), &c.us(rest));
        Ok(Self {
            a: mi(&[1], &[2, 3]),
            b: mi(&[2], &[1, 3]),
            c: mi(&[3], &[1, 2]),
            d: mi(&[1, 2], &[3]),
            e: mi(&[1, 3], &[2]),
            f: mi(&[2, 3], &[1]),
            g: mi(&[1, 2, 3], &[]),
        })
    }

    /// The smallest total capacity that admits the region.
    pub fn sum_threshold(&self) -> f64 {
        self.g + self.f
    }

    /// Rate rows over `(R_1, R_2, R_3)` in `≤` form, with names.
    fn rate_rows(&self) -> Vec<(String, Vec<i64>, f64)> {
        vec![
            ("R1 >= a".into(), vec![-1, 0, 0], -self.a),
            ("R2 >= b".into(), vec![0, -1, 0], -self.b),
            ("R3 >= c".into(), vec![0, 0, -1], -self.c),
            ("R1 + R2 >= d".into(), vec![-1, -1, 0], -self.d),
            ("R1 + R3 >= e".into(), vec![-1, 0, -1], -self.e),
            ("R2 + R3 >= f".into(), vec![0, -1, -1], -self.f),
            ("R1 + R2 + R3 >= g".into(), vec![-1, -1, -1], -self.g),
        ]
    }
}

/// Decide the five-node region for fixed capacities.
pub fn five_node_region_check(
    joint: &JointPmf,
    channels: &[Channel],
    caps: &FiveNodeCapacities,
) -> Result<RegionVerdict> {
    Ok(five_node_terms_check(&FiveNodeTerms::compute(joint, channels)?, caps))
}

pub fn five_node_terms_check(t: &FiveNodeTerms, caps: &FiveNodeCapacities) -> RegionVerdict {
    let mut names = vec!["C15 >= R1".to_string(), "C24 >= R2".into(), "C34 >= R3".into(), "C45 >= R2 + R3".into()];
    let mut rows = vec![
        (vec![1, 0, 0], caps.c15),
        (vec![0, 1, 0], caps.c24),
        (vec![0, 0, 1], caps.c34),
        (vec![0, 1, 1], caps.c45),
    ];
    for (n, c, r) in t.rate_rows() {
        names.push(n);
        rows.push((c, r));
    }
    nonnegative_rows(3, &mut names, &mut rows);
    decide(&names, rows, 3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumVerdict {
    pub feasible: bool,
    pub c_sum: f64,
    /// `I(X_{1:3}; U_{1:3}) + I(X_2, X_3; U_2, U_3 | U_1)`
    pub threshold: f64,
}

pub fn sum_region_check(joint: &JointPmf, channels: &[Channel], c_sum: f64) -> Result<SumVerdict> {
    let threshold = FiveNodeTerms::compute(joint, channels)?.sum_threshold();
    Ok(SumVerdict { feasible: c_sum >= threshold - fme::TOL, c_sum, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmeEquivalence {
    pub terms: FiveNodeTerms,
    /// Threshold read off the direct sum condition.
    pub direct: f64,
    /// Least `C_sum` left after eliminating rates and the capacity split.
    pub projected: f64,
    /// A split of exactly `direct` that the five-node check accepts.
    pub split: FiveNodeCapacities,
    pub split_feasible: bool,
    pub passed: bool,
}

/// Agreement tolerance between the projected and direct thresholds.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

/// The direct sum condition holds exactly when some split of `C_sum` over
/// the four links passes the five-node check. Checked two ways: the
/// projection of the full system onto `C_sum` must be `C_sum ≥ direct`,
/// and a split of exactly `direct` must pass.
pub fn fme_equivalence_test(joint: &JointPmf, channels: &[Channel]) -> Result<FmeEquivalence> {
    Ok(fme_equivalence_terms(&FiveNodeTerms::compute(joint, channels)?))
}

pub fn fme_equivalence_terms(t: &FiveNodeTerms) -> FmeEquivalence {
    // variables R1, R2, R3, C15, C24, C34, Csum; C45 = Csum − C15 − C24 − C34
    let mut rows: Vec<(Vec<i64>, f64)> = vec![
        (vec![1, 0, 0, -1, 0, 0, 0], 0.0),
        (vec![0, 1, 0, 0, -1, 0, 0], 0.0),
        (vec![0, 0, 1, 0, 0, -1, 0], 0.0),
        (vec![0, 1, 1, 1, 1, 1, -1], 0.0),
        (vec![0, 0, 0, 1, 1, 1, -1], 0.0),
    ];
    for (_, mut c, r) in t.rate_rows() {
        c.extend([0; 4]);
        rows.push((c, r));
    }
    for v in 0..6 {
        let mut c = vec![0; 7];
        c[v] = -1;
        rows.push((c, 0.0));
    }
    let projected_rows = fme::project(&fme::system(rows), &[6]);
    let projected = lower_bound_on_last(&projected_rows);

    let direct = t.sum_threshold();
    let split = FiveNodeCapacities { c15: (t.g - t.f).max(0.0), c24: t.b, c34: (t.f - t.b).max(0.0), c45: t.f };
    let split_feasible = five_node_terms_check(t, &split).feasible;
    let agree = matches!(projected, Some(p) if (p - direct).abs() <= EQUIVALENCE_TOL);
    FmeEquivalence {
        terms: *t,
        direct,
        projected: projected.unwrap_or(f64::NAN),
        split,
        split_feasible,
        passed: agree && split_feasible,
    }
}

/// For rows over a single live variable (the last), the implied lower
/// bound; `None` if the rows are contradictory or bound it from above.
fn lower_bound_on_last(rows: &[Ineq]) -> Option<f64> {
    let mut lo = f64::NEG_INFINITY;
    for r in rows {
        let (last, rest) = r.coeffs.split_last().expect("nonempty rows");
        if rest.iter().any(|&c| c != 0) {
            return None;
        }
        match last.signum() {
            0 if r.rhs < -fme::TOL => return None,
            0 => {}
            1 => return None,
            _ => lo = lo.max(r.rhs / *last as f64),
        }
    }
    Some(lo.max(0.0))
}
