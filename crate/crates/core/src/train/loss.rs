use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
pub(crate) fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean Bernoulli negative log-likelihood of probabilities `p` against labels `y`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::shape(
            "bce_loss",
            format!("{} probabilities", p.len()),
            format!("{} labels", y.len()),
        ));
    }
    if p.is_empty() {
        return Err(Error::shape(
            "bce_loss",
            "0 probabilities",
            "a non-empty vector",
        ));
    }
    let total: f64 = p.iter().zip(y).map(|(&p, &y)| bce_term(p, y)).sum();
    Ok(total / p.len() as f64)
}

/// `(1 - ls) · y + ls / n_e`, elementwise.
pub fn smooth_labels(y: &[f64], ls: f64, n_entities: usize) -> Vec<f64> {
    let floor = ls / n_entities as f64;
    y.iter().map(|&v| (1.0 - ls) * v + floor).collect()
}
