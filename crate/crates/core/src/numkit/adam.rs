//! Bias-corrected Adam, in a dense form for small parameter blocks and a
//! row-lazy form for embedding tables where each step touches a few rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moments for a list of parameter blocks, in a fixed block order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, block_sizes: &[usize]) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam tracks {} blocks, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!("adam block {i} size changed")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.cfg;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Lazy Adam over the rows of an embedding table: only rows with a gradient
/// in the current step have their moments advanced. Bias correction uses the
/// global step count.
#[derive(Clone, Debug)]
pub struct RowAdam {
    pub cfg: AdamConfig,
    pub step: u64,
    dim: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl RowAdam {
    pub fn new(cfg: AdamConfig, rows: usize, dim: usize) -> Self {
        RowAdam {
            cfg,
            step: 0,
            dim,
            m: vec![0.0; rows * dim],
            v: vec![0.0; rows * dim],
        }
    }

    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update_row(&mut self, row: usize, params: &mut [f64], grad: &[f64]) {
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.cfg;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let off = row * self.dim;
        let m = &mut self.m[off..off + self.dim];
        let v = &mut self.v[off..off + self.dim];
        for j in 0..self.dim {
            m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
            v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
            params[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = vec![1.0, -2.0];
        let mut st = AdamState::new(AdamConfig::with_lr(0.01), &[2]);
        st.step(&mut [&mut w], &[&[3.0, -0.5]]).unwrap();
        assert!((w[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((w[1] - (-2.0 + 0.01)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = vec![0.25];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        st.step(&mut [&mut w], &[&[0.0]]).unwrap();
        assert_eq!(w, vec![0.25]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut w = vec![0.0];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        assert!(st.step(&mut [&mut w], &[&[f64::NAN]]).is_err());
        assert_eq!(st.step, 0);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let mut w = vec![0.0];
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), &[1]);
        for _ in 0..200 {
            let g = 2.0 * (w[0] - 3.0);
            st.step(&mut [&mut w], &[&[g]]).unwrap();
        }
        assert!((w[0] - 3.0).abs() < 0.05, "{}", w[0]);
    }

    #[test]
    fn row_adam_matches_dense_on_single_row() {
        let mut a = vec![0.5, 0.5];
        let mut b = a.clone();
        let mut dense = AdamState::new(AdamConfig::with_lr(0.05), &[2]);
        let mut lazy = RowAdam::new(AdamConfig::with_lr(0.05), 1, 2);
        for k in 0..5 {
            let g = [k as f64 - 2.0, 1.0];
            dense.step(&mut [&mut a], &[&g]).unwrap();
            lazy.begin_step();
            lazy.update_row(0, &mut b, &g);
        }
        assert_eq!(a, b);
    }
}
