//! Central finite-difference check of backprop gradients.

use super::dense::Dense;
use super::loss::Loss;
use super::mlp::{Activation, ForwardMode, Mlp};
use crate::error::Result;

/// Pre-activations closer than this to a ReLU kink disqualify a sample.
pub const KINK_MARGIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params_checked: usize,
    pub samples_excluded: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-7)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

fn loss_of(mlp: &Mlp, x: &Dense, y: &[f64], loss: Loss) -> Result<f64> {
    let out = mlp.forward(x, ForwardMode::Inference)?;
    Ok(loss.eval(out.output().as_slice(), y)?.0)
}

/// Compares backprop against central differences with step `h` for every
/// parameter. Runs in inference mode (no dropout). Samples with a ReLU
/// pre-activation within [`KINK_MARGIN`] of zero are dropped first.
pub fn grad_check(mlp: &Mlp, loss: Loss, x: &Dense, y: &[f64], h: f64) -> Result<GradCheckReport> {
    let acts = mlp.forward(x, ForwardMode::Inference)?;
    let keep: Vec<usize> = (0..x.rows())
        .filter(|&r| {
            mlp.layers.iter().zip(&acts.pre).all(|(l, z)| {
                l.activation != Activation::Relu || z.row(r).iter().all(|v| v.abs() > KINK_MARGIN)
            })
        })
        .collect();
    let excluded = x.rows() - keep.len();
    let x = x.select_rows(&keep);
    let y: Vec<f64> = keep.iter().map(|&r| y[r]).collect();
    if y.is_empty() {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            params_checked: 0,
            samples_excluded: excluded,
        });
    }
    let acts = mlp.forward(&x, ForwardMode::Inference)?;
    let (_, dl_dout) = loss.eval(acts.output().as_slice(), &y)?;
    let grad_out = Dense::from_vec(x.rows(), mlp.output_dim(), dl_dout)?;
    let grads = mlp.backward(&acts, &grad_out)?;
    let analytic: Vec<f64> = grads.blocks().concat();

    let mut probe = mlp.clone();
    let mut max_rel: f64 = 0.0;
    let mut flat_index = 0;
    for block in 0..mlp.block_sizes().len() {
        let len = probe.blocks_mut()[block].len();
        for j in 0..len {
            let orig = probe.blocks_mut()[block][j];
            probe.blocks_mut()[block][j] = orig + h;
            let up = loss_of(&probe, &x, &y, loss)?;
            probe.blocks_mut()[block][j] = orig - h;
            let down = loss_of(&probe, &x, &y, loss)?;
            probe.blocks_mut()[block][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            max_rel = max_rel.max(relative_error(analytic[flat_index], numeric));
            flat_index += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        params_checked: flat_index,
        samples_excluded: excluded,
    })
}
