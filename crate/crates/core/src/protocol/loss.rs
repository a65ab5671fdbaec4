//! Training objectives. Each returns the quantity that training MAXIMIZES;
//! the engine descends on its negation.

use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};
use crate::nn::{gaussian_log_ratio_rows, LOG_LOSS_FLOOR};
use crate::tensor::Tensor;

/// Latent sample and the Gaussian parameters it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub u: Tensor,
    pub mu: Tensor,
    pub logvar: Tensor,
}

impl LatentState {
    pub fn log_ratios(&self) -> Result<Vec<f64>> {
        gaussian_log_ratio_rows(&self.u, &self.mu, &self.logvar)
    }
}

fn log_prob(p: &Tensor, r: usize, y: usize) -> Result<f64> {
    if y >= p.cols() {
        return Err(Error::InvalidArgument(format!("label {y} outside {} classes", p.cols())));
    }
    Ok(p.get(r, y).max(LOG_LOSS_FLOOR).ln())
}

fn check_batch(probs: &Tensor, labels: &[usize], s: f64) -> Result<()> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("s must be non-negative, got {s}")));
    }
    if probs.shape().len() != 2 || probs.rows() != labels.len() {
        return shape_err(format!("{} labels for output shape {:?}", labels.len(), probs.shape()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

/// `(1/n)Σ_i log Q(y_i|·) + (s/n)Σ_i Σ_j [aux_j · log Q_j(y_i|u_j) − c_j·ratio_j]`.
///
/// Any `aux` entry contributes its decoder term with weight `s`; `coefficients`
/// weight the log-ratios (multiples of `s`).
pub fn weighted_objective(
    probs: &Tensor,
    aux: &BTreeMap<usize, Tensor>,
    labels: &[usize],
    latents: &BTreeMap<usize, LatentState>,
    coefficients: &BTreeMap<usize, f64>,
    s: f64,
) -> Result<f64> {
    check_batch(probs, labels, s)?;
    let n = labels.len();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        total += log_prob(probs, r, y)?;
    }
    for (j, q) in aux {
        if q.rows() != n {
            return shape_err(format!("auxiliary output for node {j} has {} rows", q.rows()));
        }
        for (r, &y) in labels.iter().enumerate() {
            total += s * log_prob(q, r, y)?;
        }
    }
    for (j, &c) in coefficients {
        let lat = latents.get(j).ok_or_else(|| Error::InvalidArgument(format!("no latent for node {j}")))?;
        if lat.u.rows() != n {
            return shape_err(format!("latent for node {j} has {} rows", lat.u.rows()));
        }
        total -= s * c * lat.log_ratios()?.iter().sum::<f64>();
    }
    let value = total / n as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("training objective".into()));
    }
    Ok(value)
}

/// Star objective: joint decoder, one auxiliary decoder and one unit-weight
/// log-ratio per source.
pub fn star_loss(
    probs: &Tensor,
    aux: &BTreeMap<usize, Tensor>,
    labels: &[usize],
    latents: &BTreeMap<usize, LatentState>,
    s: f64,
) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::InvalidArgument("the star objective needs at least one source".into()));
    }
    if aux.keys().ne(latents.keys()) {
        return Err(Error::InvalidArgument("every source needs both a latent and an auxiliary decoder".into()));
    }
    let coefs = latents.keys().map(|&j| (j, 1.0)).collect();
    weighted_objective(probs, aux, labels, latents, &coefs, s)
}

/// Hop objective on the five-node graph: `s` on node 1's ratio, `2s` on
/// nodes 2 and 3; only node 5's decoder enters.
pub fn hop_loss_5node(probs: &Tensor, labels: &[usize], latents: &BTreeMap<usize, LatentState>, s: f64) -> Result<f64> {
    if !latents.keys().copied().eq([1, 2, 3]) {
        return Err(Error::Graph("the hop objective needs latents for exactly nodes 1, 2 and 3".into()));
    }
    let coefs = BTreeMap::from([(1, 1.0), (2, 2.0), (3, 2.0)]);
    weighted_objective(probs, &BTreeMap::new(), labels, latents, &coefs, s)
}

/// Per-sample gradient of `−log Q(y|·)` w.r.t. the probability vector,
/// scaled by `weight`.
pub fn nll_output_delta(probs: &Tensor, labels: &[usize], weight: f64) -> Result<Tensor> {
    if probs.rows() != labels.len() {
        return shape_err("label count does not match batch");
    }
    let mut delta = Tensor::zeros(probs.shape());
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::InvalidArgument(format!("label {y} outside {} classes", probs.cols())));
        }
        // floor keeps the reciprocal finite; the softmax Jacobian cancels it
        delta.set(r, y, -weight / probs.get(r, y).max(1e-300));
    }
    Ok(delta)
}
