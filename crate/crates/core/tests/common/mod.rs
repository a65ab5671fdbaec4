//! Random discrete instances and a naive joint-distribution oracle that
//! enumerates every outcome tuple explicitly.
#![allow(dead_code)]

use std::collections::BTreeMap;

use inl_core::info::{Channel, JointPmf};
use inl_core::rng;
use rand::Rng;

pub fn random_dist(r: &mut rng::Rng, k: usize, sparse: bool) -> Vec<f64> {
    loop {
        let w: Vec<f64> =
            (0..k).map(|_| if sparse && r.random_bool(0.2) { 0.0 } else { r.random::<f64>().powi(2) }).collect();
        let total: f64 = w.iter().sum();
        if total > 1e-3 {
            return w.iter().map(|v| v / total).collect();
        }
    }
}

pub fn random_channel(r: &mut rng::Rng, inputs: usize, outputs: usize, sparse: bool) -> Channel {
    Channel::new((0..inputs).map(|_| random_dist(r, outputs, sparse)).collect()).unwrap()
}

pub struct Instance {
    pub joint: JointPmf,
    pub channels: Vec<Channel>,
}

/// Three sources with alphabets in `2..=max_x`, outputs in `2..=max_u`.
pub fn random_instance(seed: u64, max_x: usize, max_u: usize) -> Instance {
    let mut r = rng::stream(seed, "instance", 0);
    let mut alphabets: Vec<usize> = (0..3).map(|_| r.random_range(2..=max_x)).collect();
    alphabets.push(r.random_range(2..=3));
    let size = alphabets.iter().product();
    let sparse = r.random_bool(0.3);
    let joint = JointPmf::new(alphabets.clone(), random_dist(&mut r, size, sparse)).unwrap();
    let channels = (0..3)
        .map(|j| match r.random_range(0..8) {
            0 => Channel::identity(alphabets[j]),
            1 => Channel::constant(alphabets[j], &random_dist(&mut r, 2, false)).unwrap(),
            _ => {
                let out = r.random_range(2..=max_u);
                let sparse = r.random_bool(0.2);
                random_channel(&mut r, alphabets[j], out, sparse)
            }
        })
        .collect();
    Instance { joint, channels }
}

/// Every outcome of `[X.., Y, U.., (U_4)]` with its probability.
pub struct Naive {
    pub outcomes: Vec<(Vec<usize>, f64)>,
}

fn decode(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for v in (0..dims.len()).rev() {
        out[v] = flat % dims[v];
        flat /= dims[v];
    }
    out
}

impl Naive {
    pub fn new(joint: &JointPmf, channels: &[Channel], combiner: Option<&Channel>) -> Self {
        let j = joint.num_sources();
        let dims: Vec<usize> = (0..=j).map(|v| joint.alphabet(v)).collect();
        let mut outcomes: Vec<(Vec<usize>, f64)> =
            joint.pmf().probs().iter().enumerate().map(|(i, &p)| (decode(i, &dims), p)).collect();
        for (k, ch) in channels.iter().enumerate() {
            let mut next = Vec::new();
            for (o, p) in &outcomes {
                for u in 0..ch.outputs() {
                    let mut t = o.clone();
                    t.push(u);
                    next.push((t, p * ch.row(o[k])[u]));
                }
            }
            outcomes = next;
        }
        if let Some(c) = combiner {
            let k3 = channels[2].outputs();
            let mut next = Vec::new();
            for (o, p) in &outcomes {
                let row = o[j + 2] * k3 + o[j + 3];
                for u in 0..c.outputs() {
                    let mut t = o.clone();
                    t.push(u);
                    next.push((t, p * c.row(row)[u]));
                }
            }
            outcomes = next;
        }
        Self { outcomes }
    }

    pub fn marginal(&self, vars: &[usize]) -> BTreeMap<Vec<usize>, f64> {
        let mut m = BTreeMap::new();
        for (o, p) in &self.outcomes {
            *m.entry(vars.iter().map(|&v| o[v]).collect()).or_insert(0.0) += p;
        }
        m
    }

    pub fn h(&self, vars: &[usize]) -> f64 {
        self.marginal(vars).values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    pub fn h_given(&self, a: &[usize], c: &[usize]) -> f64 {
        let ac: Vec<usize> = a.iter().chain(c).copied().collect();
        self.h(&ac) - self.h(c)
    }

    pub fn mi(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        let ac: Vec<usize> = a.iter().chain(c).copied().collect();
        let bc: Vec<usize> = b.iter().chain(c).copied().collect();
        let abc: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
        self.h(&ac) + self.h(&bc) - self.h(&abc) - self.h(c)
    }
}
