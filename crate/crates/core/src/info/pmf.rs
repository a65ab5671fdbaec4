//! Finite joint distributions, channels, and Shannon quantities in bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ALPHABET: usize = 4;
pub const MAX_SOURCES: usize = 3;
/// Allowed slack on a probability table summing to one.
pub const SUM_TOL: f64 = 1e-12;

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for v in (0..dims.len().saturating_sub(1)).rev() {
        s[v] = s[v + 1] * dims[v + 1];
    }
    s
}

/// `−Σ p log₂ p` with `0 log 0 = 0`. Clamped at zero: a point mass summing
/// to a hair over one would otherwise come out at −1e-16.
pub fn entropy_of(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>().max(0.0)
}

pub fn binary_entropy(p: f64) -> f64 {
    entropy_of(&[p, 1.0 - p])
}

/// A probability table over a tuple of finite variables, row-major with the
/// last variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Distribution("empty alphabet".into()));
        }
        let size: usize = dims.iter().product();
        if probs.len() != size {
            return Err(Error::Distribution(format!("{} probabilities for {size} outcomes", probs.len())));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Distribution(format!("probability {p} is negative or not finite")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::Distribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { dims, probs })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_vars(&self) -> usize {
        self.dims.len()
    }

    fn check_vars(&self, vars: &[usize]) -> Result<()> {
        for (i, &v) in vars.iter().enumerate() {
            if v >= self.dims.len() {
                return Err(Error::InvalidArgument(format!(
                    "variable {v} out of range for {} variables",
                    self.dims.len()
                )));
            }
            if vars[..i].contains(&v) {
                return Err(Error::InvalidArgument(format!("variable {v} listed twice")));
            }
        }
        Ok(())
    }

    /// Marginal over `vars`, in the order given.
    pub fn marginal(&self, vars: &[usize]) -> Result<Pmf> {
        self.check_vars(vars)?;
        let out_dims: Vec<usize> = vars.iter().map(|&v| self.dims[v]).collect();
        let out_strides = strides(&out_dims);
        let mut contrib = vec![0; self.dims.len()];
        for (pos, &v) in vars.iter().enumerate() {
            contrib[v] = out_strides[pos];
        }
        let mut out = vec![0.0; out_dims.iter().product()];
        let mut digits = vec![0; self.dims.len()];
        let mut off = 0;
        for &p in &self.probs {
            out[off] += p;
            for v in (0..self.dims.len()).rev() {
                digits[v] += 1;
                off += contrib[v];
                if digits[v] < self.dims[v] {
                    break;
                }
                off -= contrib[v] * self.dims[v];
                digits[v] = 0;
            }
        }
        Ok(Pmf { dims: out_dims, probs: out })
    }

    /// `H(vars)`; the empty set has entropy 0.
    pub fn entropy(&self, vars: &[usize]) -> Result<f64> {
        if vars.is_empty() {
            return Ok(0.0);
        }
        Ok(entropy_of(&self.marginal(vars)?.probs))
    }

    /// `H(A | C)`.
    pub fn conditional_entropy(&self, a: &[usize], c: &[usize]) -> Result<f64> {
        disjoint(&[a, c])?;
        Ok(self.entropy(&union(&[a, c]))? - self.entropy(c)?)
    }

    /// `I(A; B | C) = H(A,C) + H(B,C) − H(A,B,C) − H(C)`.
    pub fn mutual_information(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidArgument("mutual information needs two nonempty variable sets".into()));
        }
        disjoint(&[a, b, c])?;
        Ok(self.entropy(&union(&[a, c]))? + self.entropy(&union(&[b, c]))?
            - self.entropy(&union(&[a, b, c]))?
            - self.entropy(c)?)
    }

    /// Extend by a variable drawn from `channel` given `inputs`; the
    /// channel's rows are indexed mixed-radix over `inputs`, first input most
    /// significant.
    pub fn extend(&self, inputs: &[usize], channel: &Channel) -> Result<Pmf> {
        self.check_vars(inputs)?;
        let rows: usize = inputs.iter().map(|&v| self.dims[v]).product();
        if channel.inputs() != rows {
            return Err(Error::Shape(format!("channel has {} rows, inputs take {rows} values", channel.inputs())));
        }
        let m = channel.outputs();
        let st = strides(&self.dims);
        let mut probs = Vec::with_capacity(self.probs.len() * m);
        for (flat, &p) in self.probs.iter().enumerate() {
            let row = inputs.iter().fold(0, |acc, &v| acc * self.dims[v] + (flat / st[v]) % self.dims[v]);
            probs.extend(channel.row(row).iter().map(|q| p * q));
        }
        let mut dims = self.dims.clone();
        dims.push(m);
        Ok(Pmf { dims, probs })
    }
}

fn union(sets: &[&[usize]]) -> Vec<usize> {
    sets.iter().flat_map(|s| s.iter().copied()).collect()
}

fn disjoint(sets: &[&[usize]]) -> Result<()> {
    let all = union(sets);
    for (i, v) in all.iter().enumerate() {
        if all[..i].contains(v) {
            return Err(Error::InvalidArgument(format!("variable {v} appears in more than one set")));
        }
    }
    Ok(())
}

/// `P(x_1, …, x_J, y)`: variables `0..J` are the observations, `J` the label.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    pmf: Pmf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointPmfFile {
    /// Observation alphabets followed by the label alphabet.
    pub alphabets: Vec<usize>,
    pub probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(alphabets: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let j = alphabets.len().saturating_sub(1);
        if j == 0 || j > MAX_SOURCES {
            return Err(Error::Unsupported(format!("{j} sources; between 1 and {MAX_SOURCES} are supported")));
        }
        if let Some(a) = alphabets.iter().find(|&&a| a > MAX_ALPHABET) {
            return Err(Error::Unsupported(format!("alphabet of {a} symbols exceeds {MAX_ALPHABET}")));
        }
        Ok(Self { pmf: Pmf::new(alphabets, probs)? })
    }

    /// Uniform binary label observed through independent bit flips:
    /// `X_j = Y ⊕ Bern(flips[j])`.
    pub fn noisy_copies(flips: &[f64]) -> Result<Self> {
        if flips.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Distribution("flip probabilities must lie in [0, 1]".into()));
        }
        let j = flips.len();
        let mut probs = vec![0.0; 1 << (j + 1)];
        for (idx, slot) in probs.iter_mut().enumerate() {
            let y = idx & 1;
            let mut p = 0.5;
            for (k, &f) in flips.iter().enumerate() {
                let x = (idx >> (j - k)) & 1;
                p *= if x == y { 1.0 - f } else { f };
            }
            *slot = p;
        }
        Self::new(vec![2; j + 1], probs)
    }

    pub fn num_sources(&self) -> usize {
        self.pmf.num_vars() - 1
    }

    pub fn x_var(&self, j: usize) -> usize {
        j - 1
    }

    pub fn y_var(&self) -> usize {
        self.num_sources()
    }

    pub fn alphabet(&self, var: usize) -> usize {
        self.pmf.dims()[var]
    }

    pub fn pmf(&self) -> &Pmf {
        &self.pmf
    }

    pub fn to_file(&self) -> JointPmfFile {
        JointPmfFile { alphabets: self.pmf.dims().to_vec(), probs: self.pmf.probs().to_vec() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: JointPmfFile = serde_json::from_str(text)?;
        Self::new(f.alphabets, f.probs)
    }
}

/// `P(u | x)`, one row per input symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelFile", into = "ChannelFile")]
pub struct Channel {
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub rows: Vec<Vec<f64>>,
}

impl TryFrom<ChannelFile> for Channel {
    type Error = Error;

    fn try_from(f: ChannelFile) -> Result<Self> {
        Channel::new(f.rows)
    }
}

impl From<Channel> for ChannelFile {
    fn from(c: Channel) -> Self {
        ChannelFile { rows: c.rows }
    }
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(m) = rows.first().map(Vec::len) else {
            return Err(Error::Distribution("channel without rows".into()));
        };
        if m == 0 {
            return Err(Error::Distribution("channel with an empty output alphabet".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::Distribution(format!("row {i} has {} entries, expected {m}", r.len())));
            }
            if r.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Distribution(format!("row {i} has a negative or non-finite entry")));
            }
            let total: f64 = r.iter().sum();
            if (total - 1.0).abs() > SUM_TOL {
                return Err(Error::Distribution(format!("row {i} sums to {total}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: (0..n).map(|i| (0..n).map(|k| if i == k { 1.0 } else { 0.0 }).collect()).collect() }
    }

    /// Output independent of the input.
    pub fn constant(inputs: usize, dist: &[f64]) -> Result<Self> {
        Self::new(vec![dist.to_vec(); inputs])
    }

    pub fn bsc(p: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Largest difference between any two rows; 0 for a constant channel.
    pub fn spread(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in &self.rows {
            for b in &self.rows {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        worst
    }
}

/// `P(x, y) Π_j P(u_j | x_j)` over `[X_1..X_J, Y, U_1..U_J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Composed {
    pmf: Pmf,
    sources: usize,
}

impl Composed {
    pub fn pmf(&self) -> &Pmf {
        &self.pmf
    }

    pub fn num_sources(&self) -> usize {
        self.sources
    }

    pub fn x(&self, j: usize) -> usize {
        j - 1
    }

    pub fn y(&self) -> usize {
        self.sources
    }

    pub fn u(&self, j: usize) -> usize {
        self.sources + j
    }

    pub fn xs(&self, set: &[usize]) -> Vec<usize> {
        set.iter().map(|&j| self.x(j)).collect()
    }

    pub fn us(&self, set: &[usize]) -> Vec<usize> {
        set.iter().map(|&j| self.u(j)).collect()
    }

    pub fn all_sources(&self) -> Vec<usize> {
        (1..=self.sources).collect()
    }

    pub fn mi(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        self.pmf.mutual_information(a, b, c).expect("variable sets of a composed pmf are valid")
    }

    pub fn h(&self, a: &[usize], c: &[usize]) -> f64 {
        self.pmf.conditional_entropy(a, c).expect("variable sets of a composed pmf are valid")
    }
}

pub fn compose(joint: &JointPmf, channels: &[Channel]) -> Result<Composed> {
    let j = joint.num_sources();
    if channels.len() != j {
        return Err(Error::Shape(format!("{} channels for {j} sources", channels.len())));
    }
    let mut pmf = joint.pmf().clone();
    for (k, ch) in channels.iter().enumerate() {
        if ch.outputs() > MAX_ALPHABET {
            return Err(Error::Unsupported(format!("channel {} has {} outputs", k + 1, ch.outputs())));
        }
        pmf = pmf.extend(&[k], ch)?;
    }
    Ok(Composed { pmf, sources: j })
}
