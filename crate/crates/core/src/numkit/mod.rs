//! Small dense numeric kernel: matrices, feed-forward networks with manual
//! gradients, Adam, losses and seeded random streams.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod rng;

pub use adam::{AdamConfig, AdamState, RowAdam};
pub use dense::Dense;
pub use loss::{bce_loss, Loss};
pub use mlp::{Activation, ForwardMode, Mlp};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
    }
}
