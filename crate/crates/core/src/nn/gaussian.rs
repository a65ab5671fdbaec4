//! Diagonal Gaussian latent head and the encoder log-density ratio against a
//! standard normal prior.

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Splits a `2d`-wide final layer into a mean and a log-variance block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianHead {
    latent_dim: usize,
}

impl GaussianHead {
    pub fn new(latent_dim: usize) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::InvalidArgument("latent dimension must be positive".into()));
        }
        Ok(Self { latent_dim })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// `(μ, log σ²)` from the raw network output.
    pub fn split(&self, out: &Tensor) -> Result<(Tensor, Tensor)> {
        if out.cols() != 2 * self.latent_dim {
            return shape_err(format!(
                "head of dim {} needs {} outputs, got {}",
                self.latent_dim,
                2 * self.latent_dim,
                out.cols()
            ));
        }
        let mut parts = out.split_cols(&[self.latent_dim, self.latent_dim])?;
        let logvar = parts.pop().expect("two parts");
        let mu = parts.pop().expect("two parts");
        Ok((mu, logvar))
    }

    /// Gradient of a per-sample loss w.r.t. the raw `[μ | log σ²]` output,
    /// given the upstream gradient w.r.t. `u = μ + exp(log σ²/2)·ε` and the
    /// coefficient `coef` of the log-ratio term that the loss adds locally.
    ///
    /// Uses `σ·ε = u − μ`, so the noise itself is not needed.
    pub fn output_delta(&self, u: &Tensor, mu: &Tensor, logvar: &Tensor, grad_u: &Tensor, coef: f64) -> Result<Tensor> {
        let d = self.latent_dim;
        for t in [u, mu, logvar, grad_u] {
            if t.cols() != d || t.rows() != u.rows() {
                return shape_err("latent tensors must share shape [batch × latent_dim]");
            }
        }
        let mut delta = Tensor::zeros(&[u.rows(), 2 * d]);
        for r in 0..u.rows() {
            let (ur, mr, gr) = (u.row(r), mu.row(r), grad_u.row(r));
            let out = delta.row_mut(r);
            for k in 0..d {
                let spread = ur[k] - mr[k];
                // total derivatives of the log ratio through the reparametrization:
                // ∂R/∂μ = u, ∂R/∂logvar = −½ + ½·u·(u − μ)
                out[k] = gr[k] + coef * ur[k];
                out[d + k] = 0.5 * gr[k] * spread + coef * (-0.5 + 0.5 * ur[k] * spread);
            }
        }
        Ok(delta)
    }
}

/// `u = μ + exp(logvar/2) ⊙ noise`.
pub fn sample_latent(mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Result<Tensor> {
    if mu.shape() != logvar.shape() || mu.shape() != noise.shape() {
        return shape_err(format!(
            "latent shapes differ: μ {:?}, logvar {:?}, noise {:?}",
            mu.shape(),
            logvar.shape(),
            noise.shape()
        ));
    }
    let data =
        mu.data().iter().zip(logvar.data()).zip(noise.data()).map(|((m, lv), e)| m + (0.5 * lv).exp() * e).collect();
    Tensor::new(mu.shape().to_vec(), data)
}

/// `log N(u; μ, diag(exp(logvar))) − log N(u; 0, I)` in nats.
pub fn gaussian_log_ratio(u: &[f64], mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if u.len() != mu.len() || u.len() != logvar.len() {
        return shape_err(format!("lengths differ: {} / {} / {}", u.len(), mu.len(), logvar.len()));
    }
    if u.iter().chain(mu).chain(logvar).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gaussian_log_ratio input".into()));
    }
    Ok(u.iter()
        .zip(mu)
        .zip(logvar)
        .map(|((&u, &m), &lv)| -0.5 * lv - 0.5 * (u - m) * (u - m) * (-lv).exp() + 0.5 * u * u)
        .sum())
}

/// Row-wise [`gaussian_log_ratio`] over a batch.
pub fn gaussian_log_ratio_rows(u: &Tensor, mu: &Tensor, logvar: &Tensor) -> Result<Vec<f64>> {
    if u.shape() != mu.shape() || u.shape() != logvar.shape() {
        return shape_err("latent shapes differ");
    }
    (0..u.rows()).map(|r| gaussian_log_ratio(u.row(r), mu.row(r), logvar.row(r))).collect()
}

/// `KL(N(μ, diag(exp(logvar))) ‖ N(0, I))` in nats.
pub fn gaussian_kl_closed_form(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, lv)| m * m + lv.exp() - 1.0 - lv).sum::<f64>()
}
