//! Fourier-Motzkin elimination for small systems `A x ≤ b` with integer
//! coefficients and real right-hand sides.
//!
//! Every derived row remembers the nonnegative multipliers of the original
//! rows that produced it, so an infeasible system comes with a certificate.

use std::collections::BTreeMap;

/// Slack allowed when comparing right-hand sides.
pub const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Ineq {
    pub coeffs: Vec<i64>,
    pub rhs: f64,
    /// Multipliers of the original rows.
    pub origin: Vec<f64>,
}

impl Ineq {
    pub fn is_trivial(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.coeffs.iter().zip(x).map(|(&c, v)| c as f64 * v).sum::<f64>()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn normalise(mut r: Ineq) -> Ineq {
    let g = r.coeffs.iter().fold(0, |g, &c| gcd(g, c));
    if g > 1 {
        r.coeffs.iter_mut().for_each(|c| *c /= g);
        r.rhs /= g as f64;
        r.origin.iter_mut().for_each(|m| *m /= g as f64);
    }
    r
}

/// Keep the tightest row per coefficient vector.
fn dedup(rows: Vec<Ineq>) -> Vec<Ineq> {
    let mut best: BTreeMap<Vec<i64>, Ineq> = BTreeMap::new();
    for r in rows.into_iter().map(normalise) {
        match best.get(&r.coeffs) {
            Some(b) if b.rhs <= r.rhs => {}
            _ => {
                best.insert(r.coeffs.clone(), r);
            }
        }
    }
    best.into_values().collect()
}

/// Project out variable `var`.
pub fn eliminate(rows: &[Ineq], var: usize) -> Vec<Ineq> {
    let mut out = Vec::new();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for r in rows {
        match r.coeffs[var].signum() {
            0 => out.push(r.clone()),
            1 => pos.push(r),
            _ => neg.push(r),
        }
    }
    for p in &pos {
        for n in &neg {
            let (a, b) = (p.coeffs[var], -n.coeffs[var]);
            let coeffs = p.coeffs.iter().zip(&n.coeffs).map(|(&x, &y)| b * x + a * y).collect();
            let origin = p.origin.iter().zip(&n.origin).map(|(x, y)| b as f64 * x + a as f64 * y).collect();
            out.push(Ineq { coeffs, rhs: b as f64 * p.rhs + a as f64 * n.rhs, origin });
        }
    }
    dedup(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Feasible(Vec<f64>),
    /// A nonnegative combination of the rows reading `0 ≤ rhs < 0`.
    Infeasible(Ineq),
}

/// Build rows with unit origin vectors.
pub fn system(rows: Vec<(Vec<i64>, f64)>) -> Vec<Ineq> {
    let m = rows.len();
    rows.into_iter()
        .enumerate()
        .map(|(i, (coeffs, rhs))| {
            let mut origin = vec![0.0; m];
            origin[i] = 1.0;
            Ineq { coeffs, rhs, origin }
        })
        .collect()
}

/// Eliminate every variable except those in `keep`, last index first.
pub fn project(rows: &[Ineq], keep: &[usize]) -> Vec<Ineq> {
    let n = rows.first().map_or(0, |r| r.coeffs.len());
    let mut cur = dedup(rows.to_vec());
    for v in (0..n).rev().filter(|v| !keep.contains(v)) {
        cur = eliminate(&cur, v);
    }
    cur
}

/// Decide `A x ≤ b`; feasible systems come with a witness found by back
/// substitution, taking the lower end of each variable's interval.
pub fn solve(rows: &[Ineq], num_vars: usize) -> Outcome {
    let mut stages = vec![dedup(rows.to_vec())];
    for v in (0..num_vars).rev() {
        let next = eliminate(stages.last().expect("at least one stage"), v);
        stages.push(next);
    }
    let last = stages.last().expect("at least one stage");
    if let Some(bad) = last.iter().filter(|r| r.rhs < -TOL).min_by(|a, b| a.rhs.total_cmp(&b.rhs)) {
        return Outcome::Infeasible(bad.clone());
    }
    // stage k still holds variables 0..num_vars-k
    let mut x = vec![0.0; num_vars];
    for v in 0..num_vars {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for r in &stages[num_vars - v - 1] {
            let c = r.coeffs[v];
            if c == 0 {
                continue;
            }
            let partial: f64 = r.coeffs[..v].iter().zip(&x).map(|(&k, xi)| k as f64 * xi).sum();
            let bound = (r.rhs - partial) / c as f64;
            if c > 0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
        x[v] = if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi.min(0.0)
        } else {
            0.0
        };
    }
    Outcome::Feasible(x)
}

/// Largest violation of any row at `x`; nonpositive means satisfied.
pub fn max_violation(rows: &[Ineq], x: &[f64]) -> f64 {
    rows.iter().map(|r| -r.slack(x)).fold(f64::NEG_INFINITY, f64::max)
}
