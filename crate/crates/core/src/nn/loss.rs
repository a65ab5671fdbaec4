use crate::error::{Error, Result};

/// Probabilities are clamped to this floor before taking the log.
pub const LOG_LOSS_FLOOR: f64 = 1e-12;

/// Logarithmic loss `log(1 / p̂[y])` in nats.
pub fn log_loss(y: usize, p_hat: &[f64]) -> Result<f64> {
    if y >= p_hat.len() {
        return Err(Error::InvalidArgument(format!("label {y} outside {} classes", p_hat.len())));
    }
    if p_hat.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Distribution("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = p_hat.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Distribution(format!("probabilities sum to {total}")));
    }
    Ok(-p_hat[y].max(LOG_LOSS_FLOOR).ln())
}
