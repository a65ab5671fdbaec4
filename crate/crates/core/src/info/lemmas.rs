//! Exact evaluation of the five-node lower bound and its variational form,
//! with a combiner `U_4 | U_2, U_3` standing in for the relay.

use serde::{Deserialize, Serialize};

use super::lagrangian::lagrangian_ls;
use super::pmf::{compose, Channel, JointPmf, Pmf, SUM_TOL};
use crate::error::{Error, Result};

/// Slack allowed when checking the lower bound.
pub const BOUND_TOL: f64 = 1e-10;

// variable layout of the augmented pmf
const X1: usize = 0;
const X2: usize = 1;
const X3: usize = 2;
const Y: usize = 3;
const U1: usize = 4;
const U2: usize = 5;
const U3: usize = 6;
const U4: usize = 7;

/// `P(x, y) Π_j P(u_j | x_j) P(u_4 | u_2, u_3)`.
fn augmented(joint: &JointPmf, channels: &[Channel], combiner: &Channel) -> Result<Pmf> {
    if joint.num_sources() != 3 {
        return Err(Error::Shape("the relay bounds need three sources".into()));
    }
    compose(joint, channels)?.pmf().extend(&[U2, U3], combiner)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub l_s: f64,
    pub l_low: f64,
    pub holds: bool,
}

/// `−H(Y|U_1,U_4) − s I(X_1;U_1) − 2s[I(X_2;U_2) + I(X_3;U_3)] + 2s[I(U_2;U_1) + I(U_3;U_1,U_2)]`
fn l_low(p: &Pmf, s: f64) -> Result<f64> {
    let h_y = p.conditional_entropy(&[Y], &[U1, U4])?;
    let own = p.mutual_information(&[X1], &[U1], &[])?;
    let relayed = p.mutual_information(&[X2], &[U2], &[])? + p.mutual_information(&[X3], &[U3], &[])?;
    let shared = p.mutual_information(&[U2], &[U1], &[])? + p.mutual_information(&[U3], &[U1, U2], &[])?;
    Ok(-h_y - s * own - 2.0 * s * relayed + 2.0 * s * shared)
}

pub fn lower_bound_check(joint: &JointPmf, channels: &[Channel], combiner: &Channel, s: f64) -> Result<LowerBound> {
    let l_s = lagrangian_ls(joint, channels, s)?;
    let low = l_low(&augmented(joint, channels, combiner)?, s)?;
    Ok(LowerBound { l_s, l_low: low, holds: l_s >= low - BOUND_TOL })
}

/// Variational decoder and priors. The priors of `U_2` and `U_3` may
/// depend on the earlier latents; rows are indexed mixed-radix, earlier
/// variable most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSet {
    /// `Q(y | u_1, u_4)`
    pub decoder: Channel,
    pub u1: Vec<f64>,
    /// `Q(u_2 | u_1)`
    pub u2: Channel,
    /// `Q(u_3 | u_1, u_2)`
    pub u3: Channel,
}

impl QSet {
    fn validate(&self, dims: &[usize]) -> Result<()> {
        let expect = [
            ("decoder", &self.decoder, dims[U1] * dims[U4], dims[Y]),
            ("u2 prior", &self.u2, dims[U1], dims[U2]),
            ("u3 prior", &self.u3, dims[U1] * dims[U2], dims[U3]),
        ];
        for (name, ch, rows, cols) in expect {
            if ch.inputs() != rows || ch.outputs() != cols {
                return Err(Error::Shape(format!(
                    "{name} is {}×{}, expected {rows}×{cols}",
                    ch.inputs(),
                    ch.outputs()
                )));
            }
        }
        if self.u1.len() != dims[U1] {
            return Err(Error::Shape(format!("u1 prior has {} entries, expected {}", self.u1.len(), dims[U1])));
        }
        let total: f64 = self.u1.iter().sum();
        if self.u1.iter().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Distribution("u1 prior is not a distribution".into()));
        }
        Ok(())
    }
}

/// Conditional rows of `P(target | given)`; rows without mass are uniform.
fn conditional(p: &Pmf, given: &[usize], target: usize) -> Result<Channel> {
    let mut vars = given.to_vec();
    vars.push(target);
    let m = p.marginal(&vars)?;
    let k = p.dims()[target];
    let rows = m
        .probs()
        .chunks(k)
        .map(|r| {
            let total: f64 = r.iter().sum();
            if total > 0.0 {
                r.iter().map(|v| v / total).collect()
            } else {
                vec![1.0 / k as f64; k]
            }
        })
        .collect();
    Channel::new(renormalise(rows))
}

// Division can leave a row a few ulps off one; fold the excess into the
// largest entry.
fn renormalise(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for r in &mut rows {
        let total: f64 = r.iter().sum();
        let (imax, _) = r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty row");
        r[imax] += 1.0 - total;
    }
    rows
}

/// The choice of `Q` at which the variational bound is tight.
pub fn optimal_q(joint: &JointPmf, channels: &[Channel], combiner: &Channel) -> Result<QSet> {
    let p = augmented(joint, channels, combiner)?;
    Ok(QSet {
        decoder: conditional(&p, &[U1, U4], Y)?,
        u1: p.marginal(&[U1])?.probs().to_vec(),
        u2: conditional(&p, &[U1], U2)?,
        u3: conditional(&p, &[U1, U2], U3)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalBound {
    pub l_low: f64,
    pub l_vlow: f64,
    pub gap: f64,
}

/// `E[log₂ f(outcome)]` under the marginal on `vars`; `−∞` once `f` vanishes
/// where the marginal has mass.
fn expect_log(p: &Pmf, vars: &[usize], f: impl Fn(&[usize]) -> f64) -> Result<f64> {
    let m = p.marginal(vars)?;
    let dims = m.dims().to_vec();
    let mut idx = vec![0; dims.len()];
    let mut acc = 0.0;
    for &w in m.probs() {
        if w > 0.0 {
            acc += w * f(&idx).log2();
        }
        for v in (0..dims.len()).rev() {
            idx[v] += 1;
            if idx[v] < dims[v] {
                break;
            }
            idx[v] = 0;
        }
    }
    Ok(acc)
}

/// `E[log Q(Y|U_1,U_4)] − s E[log P(U_1|X_1)/Q(U_1)]
///  − 2s E[log P(U_2|X_2)/Q(U_2|U_1)] − 2s E[log P(U_3|X_3)/Q(U_3|U_1,U_2)]`
pub fn variational_bound_check(
    joint: &JointPmf,
    channels: &[Channel],
    combiner: &Channel,
    q: &QSet,
    s: f64,
) -> Result<VariationalBound> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("s must be a finite nonnegative number, got {s}")));
    }
    let p = augmented(joint, channels, combiner)?;
    let dims = p.dims().to_vec();
    q.validate(&dims)?;
    let (c1, c2, c3) = (&channels[0], &channels[1], &channels[2]);
    let decode = expect_log(&p, &[Y, U1, U4], |i| q.decoder.row(i[1] * dims[U4] + i[2])[i[0]])?;
    let mut l_vlow = decode;
    if s > 0.0 {
        let r1 = expect_log(&p, &[X1, U1], |i| c1.row(i[0])[i[1]] / q.u1[i[1]])?;
        let r2 = expect_log(&p, &[X2, U1, U2], |i| c2.row(i[0])[i[2]] / q.u2.row(i[1])[i[2]])?;
        let r3 = expect_log(&p, &[X3, U1, U2, U3], |i| c3.row(i[0])[i[3]] / q.u3.row(i[1] * dims[U2] + i[2])[i[3]])?;
        l_vlow -= s * r1 + 2.0 * s * (r2 + r3);
    }
    let low = l_low(&p, s)?;
    Ok(VariationalBound { l_low: low, l_vlow, gap: low - l_vlow })
}
