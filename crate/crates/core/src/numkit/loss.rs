use crate::error::{Error, Result};

/// Probability clamp used by binary cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Bce,
    Mse,
}

/// Mean binary cross-entropy and its gradient with respect to each `p`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", p.len(), y.len())));
    }
    let n = p.len() as f64;
    let mut total = 0.0;
    let grad = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            (p - y) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok((total / n, grad))
}

/// Mean of `0.5 * (p - y)^2`.
pub fn mse_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::Shape(format!("{} predictions vs {} targets", p.len(), y.len())));
    }
    let n = p.len() as f64;
    let total: f64 = p.iter().zip(y).map(|(p, y)| 0.5 * (p - y) * (p - y)).sum();
    Ok((total / n, p.iter().zip(y).map(|(p, y)| (p - y) / n).collect()))
}

impl Loss {
    pub fn eval(self, p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            Loss::Bce => bce_loss(p, y),
            Loss::Mse => mse_loss(p, y),
        }
    }
}
