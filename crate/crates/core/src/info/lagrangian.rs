//! The five-node Lagrangian and a grid search for its maximisers.

use serde::{Deserialize, Serialize};

use super::pmf::{compose, entropy_of, Channel, JointPmf};
use super::region::FiveNodeTerms;
use crate::error::{Error, Result};

/// Largest number of channel triples a search may visit.
pub const MAX_GRID_POINTS: u64 = 50_000_000;

fn check_s(s: f64) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("s must be a finite nonnegative number, got {s}")));
    }
    Ok(())
}

/// `−H(Y | U_1, U_2, U_3) − s [I(X_{1:3}; U_{1:3}) + I(X_2, X_3; U_2, U_3 | U_1)]`, in bits.
pub fn lagrangian_ls(joint: &JointPmf, channels: &[Channel], s: f64) -> Result<f64> {
    check_s(s)?;
    let t = FiveNodeTerms::compute(joint, channels)?;
    let c = compose(joint, channels)?;
    Ok(-c.h(&[c.y()], &c.us(&[1, 2, 3])) - s * t.sum_threshold())
}

/// A maximiser of the Lagrangian found on the grid, with the boundary
/// point it traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Point {
    pub s: f64,
    /// `I(Y; U*_{1:3})`
    pub delta: f64,
    /// `I(X_{1:3}; U*_{1:3}) + I(X_2, X_3; U*_2, U*_3 | U*_1)`
    pub c_s: f64,
    /// The Lagrangian at the maximiser.
    pub l_s: f64,
    pub h_y: f64,
    /// `Δ_s − (H(Y) + L_s + s C_s)`
    pub identity_residual: f64,
    pub channels: Vec<Channel>,
}

/// Every row of a channel on the simplex grid with `n` steps, keeping one
/// representative per relabelling of the outputs (columns in descending
/// lexicographic order).
fn channel_grid(inputs: usize, outputs: usize, n: usize) -> Vec<Vec<Vec<f64>>> {
    let mut points = Vec::new();
    compositions(n, outputs, &mut Vec::new(), &mut points);
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|&k| k as f64 / n as f64).collect()).collect();
    let mut out = Vec::new();
    let mut pick = vec![0usize; inputs];
    loop {
        let cols: Vec<Vec<usize>> = (0..outputs).map(|u| pick.iter().map(|&r| points[r][u]).collect()).collect();
        if cols.windows(2).all(|w| w[0] >= w[1]) {
            out.push(pick.iter().map(|&r| rows[r].clone()).collect());
        }
        let mut i = inputs;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            pick[i] += 1;
            if pick[i] < points.len() {
                break;
            }
            pick[i] = 0;
        }
    }
}

fn compositions(n: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        let mut p = prefix.clone();
        p.push(n);
        out.push(p);
        return;
    }
    for k in (0..=n).rev() {
        prefix.push(k);
        compositions(n - k, parts - 1, prefix, out);
        prefix.pop();
    }
}

fn grid_steps(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {step} does not divide 1")));
    }
    Ok(n as usize)
}

struct Candidate {
    rows: Vec<Vec<f64>>,
    /// `H(U_j | X_j)`
    noise_entropy: f64,
}

fn candidates(px: &[f64], n: usize) -> Vec<Candidate> {
    channel_grid(px.len(), px.len(), n)
        .into_iter()
        .map(|rows| {
            let noise_entropy = rows.iter().zip(px).map(|(r, p)| p * entropy_of(r)).sum();
            Candidate { rows, noise_entropy }
        })
        .collect()
}

/// Grid-search the maximiser of the Lagrangian for each `s`. Each channel
/// `U_j | X_j` keeps the alphabet of `X_j`.
pub fn prop1_curve(joint: &JointPmf, s_values: &[f64], step: f64) -> Result<Vec<Prop1Point>> {
    s_values.iter().try_for_each(|&s| check_s(s))?;
    if joint.num_sources() != 3 {
        return Err(Error::Shape("the Lagrangian is defined for three sources".into()));
    }
    let n = grid_steps(step)?;
    let dims: Vec<usize> = (0..4).map(|v| joint.alphabet(v)).collect();
    let (a1, a2, a3, ky) = (dims[0], dims[1], dims[2], dims[3]);
    let pm = joint.pmf();
    let px = |v: usize| pm.marginal(&[v]).expect("valid variable").probs().to_vec();
    // refuse before enumerating: each channel has at least
    // rows^inputs / outputs! representatives
    let estimate: f64 = (0..3)
        .map(|v| {
            let a = dims[v] as i32;
            let rows = (1..a).fold(1.0, |acc, k| acc * (n as f64 + k as f64) / k as f64);
            rows.powi(a) / (1..=a).map(f64::from).product::<f64>()
        })
        .product();
    if estimate > MAX_GRID_POINTS as f64 {
        return Err(Error::Unsupported(format!(
            "about {estimate:.3e} channel triples exceed the search limit of {MAX_GRID_POINTS}"
        )));
    }
    let (c1s, c2s, c3s) = (candidates(&px(0), n), candidates(&px(1), n), candidates(&px(2), n));
    let total = c1s.len() as u64 * c2s.len() as u64 * c3s.len() as u64;
    if total > MAX_GRID_POINTS {
        return Err(Error::Unsupported(format!(
            "{total} channel triples exceed the search limit of {MAX_GRID_POINTS}"
        )));
    }
    let p = pm.probs();

    let mut best = vec![(f64::NEG_INFINITY, [0usize; 3]); s_values.len()];
    let mut t1 = vec![0.0; a2 * a3 * ky * a1];
    let mut t2 = vec![0.0; a3 * ky * a1 * a2];
    let mut q = vec![0.0; ky * a1 * a2 * a3];
    let mut pu = vec![0.0; a1 * a2 * a3];
    let mut pu1 = vec![0.0; a1];
    for (i1, c1) in c1s.iter().enumerate() {
        // t1[x2, x3, y, u1]
        t1.iter_mut().for_each(|v| *v = 0.0);
        for x1 in 0..a1 {
            for x2 in 0..a2 {
                for x3 in 0..a3 {
                    for y in 0..ky {
                        let w = p[((x1 * a2 + x2) * a3 + x3) * ky + y];
                        let base = ((x2 * a3 + x3) * ky + y) * a1;
                        for u1 in 0..a1 {
                            t1[base + u1] += w * c1.rows[x1][u1];
                        }
                    }
                }
            }
        }
        pu1.iter_mut().for_each(|v| *v = 0.0);
        for (k, v) in t1.iter().enumerate() {
            pu1[k % a1] += v;
        }
        let h_u1 = entropy_of(&pu1);
        for (i2, c2) in c2s.iter().enumerate() {
            // t2[x3, y, u1, u2]
            t2.iter_mut().for_each(|v| *v = 0.0);
            for x2 in 0..a2 {
                for x3 in 0..a3 {
                    for y in 0..ky {
                        for u1 in 0..a1 {
                            let w = t1[((x2 * a3 + x3) * ky + y) * a1 + u1];
                            let base = ((x3 * ky + y) * a1 + u1) * a2;
                            for u2 in 0..a2 {
                                t2[base + u2] += w * c2.rows[x2][u2];
                            }
                        }
                    }
                }
            }
            for (i3, c3) in c3s.iter().enumerate() {
                // q[y, u1, u2, u3]
                q.iter_mut().for_each(|v| *v = 0.0);
                for x3 in 0..a3 {
                    for yu in 0..ky * a1 * a2 {
                        let w = t2[x3 * ky * a1 * a2 + yu];
                        for u3 in 0..a3 {
                            q[yu * a3 + u3] += w * c3.rows[x3][u3];
                        }
                    }
                }
                pu.iter_mut().for_each(|v| *v = 0.0);
                for y in 0..ky {
                    for (k, v) in pu.iter_mut().enumerate() {
                        *v += q[y * a1 * a2 * a3 + k];
                    }
                }
                let h_u = entropy_of(&pu);
                let h_y_given_u = entropy_of(&q) - h_u;
                let g = h_u - c1.noise_entropy - c2.noise_entropy - c3.noise_entropy;
                let f = h_u - h_u1 - c2.noise_entropy - c3.noise_entropy;
                for (k, &s) in s_values.iter().enumerate() {
                    let val = -h_y_given_u - s * (g + f);
                    if val > best[k].0 {
                        best[k] = (val, [i1, i2, i3]);
                    }
                }
            }
        }
    }

    let h_y = pm.entropy(&[3])?;
    s_values
        .iter()
        .zip(best)
        .map(|(&s, (_, [i1, i2, i3]))| {
            let channels = vec![
                Channel::new(c1s[i1].rows.clone())?,
                Channel::new(c2s[i2].rows.clone())?,
                Channel::new(c3s[i3].rows.clone())?,
            ];
            let c = compose(joint, &channels)?;
            let delta = c.mi(&[c.y()], &c.us(&[1, 2, 3]), &[]);
            let c_s = FiveNodeTerms::compute(joint, &channels)?.sum_threshold();
            let l_s = lagrangian_ls(joint, &channels, s)?;
            Ok(Prop1Point { s, delta, c_s, l_s, h_y, identity_residual: delta - (h_y + l_s + s * c_s), channels })
        })
        .collect()
}

pub fn prop1_point(joint: &JointPmf, s: f64, step: f64) -> Result<Prop1Point> {
    Ok(prop1_curve(joint, &[s], step)?.remove(0))
}
