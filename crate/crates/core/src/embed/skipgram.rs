//! Skip-gram with negative sampling over node sequences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::numkit::rng::{label, stream};
use crate::numkit::{log_sigmoid, sigmoid, AdamConfig, Dense, RowAdam};

use super::walks::{noise_cdf, sample_cdf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Positive pairs per optimizer step.
    pub batch_size: usize,
    pub window: usize,
    pub negatives_per_positive: usize,
    pub noise_exponent: f64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 128,
            epochs: 1,
            learning_rate: 1e-2,
            batch_size: 1024,
            window: 5,
            negatives_per_positive: 5,
            noise_exponent: 0.75,
        }
    }
}

/// Input (embedding) and output (context) tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipGram {
    pub input: Dense,
    pub output: Dense,
}

/// Positive `(center, context)` pairs, each followed by its own
/// `negatives.len() / pairs.len()` noise contexts.
#[derive(Clone, Debug, Default)]
pub struct SgnsBatch {
    pub pairs: Vec<(NodeId, NodeId)>,
    pub negatives: Vec<NodeId>,
}

impl SgnsBatch {
    fn k(&self) -> usize {
        if self.pairs.is_empty() {
            0
        } else {
            self.negatives.len() / self.pairs.len()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SgnsGrads {
    pub input: Dense,
    pub output: Dense,
    pub touched_input: Vec<NodeId>,
    pub touched_output: Vec<NodeId>,
}

impl SgnsGrads {
    fn new(n: usize, dim: usize) -> Self {
        SgnsGrads {
            input: Dense::zeros(n, dim),
            output: Dense::zeros(n, dim),
            touched_input: Vec::new(),
            touched_output: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &r in &self.touched_input {
            self.input.row_mut(r).fill(0.0);
        }
        for &r in &self.touched_output {
            self.output.row_mut(r).fill(0.0);
        }
        self.touched_input.clear();
        self.touched_output.clear();
    }
}

#[derive(Clone, Debug)]
pub struct SgnsReport {
    /// Mean loss on a fixed probe batch before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

impl SkipGram {
    pub fn init(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = stream(seed, &[label("sgns-init")]);
        let bound = 0.5 / dim as f64;
        let data = (0..n * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        SkipGram {
            input: Dense::from_vec(n, dim, data).expect("finite init"),
            output: Dense::zeros(n, dim),
        }
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        SkipGram {
            input: Dense::zeros(n, dim),
            output: Dense::zeros(n, dim),
        }
    }

    /// Mean loss `-ln σ(u·v) - Σ ln σ(-u·n)` over the batch's positive pairs.
    pub fn batch_loss(&self, batch: &SgnsBatch) -> f64 {
        let k = batch.k();
        let total: f64 = batch
            .pairs
            .iter()
            .enumerate()
            .map(|(i, &(c, o))| {
                let u = self.input.row(c);
                let pos = -log_sigmoid(crate::numkit::dot(u, self.output.row(o)));
                let neg: f64 = batch.negatives[i * k..(i + 1) * k]
                    .iter()
                    .map(|&m| -log_sigmoid(-crate::numkit::dot(u, self.output.row(m))))
                    .sum();
                pos + neg
            })
            .sum();
        total / batch.pairs.len().max(1) as f64
    }

    /// Loss and gradient of [`Self::batch_loss`].
    pub fn batch_grad(&self, batch: &SgnsBatch) -> (f64, SgnsGrads) {
        let mut g = SgnsGrads::new(self.input.rows(), self.input.cols());
        let mut seen_in = vec![false; self.input.rows()];
        let mut seen_out = vec![false; self.input.rows()];
        let loss = self.accumulate(batch, &mut g, &mut seen_in, &mut seen_out);
        (loss, g)
    }

    fn accumulate(&self, batch: &SgnsBatch, g: &mut SgnsGrads, seen_in: &mut [bool], seen_out: &mut [bool]) -> f64 {
        let k = batch.k();
        let scale = 1.0 / batch.pairs.len().max(1) as f64;
        let dim = self.input.cols();
        let mut total = 0.0;
        let mut gu = vec![0.0; dim];
        for (i, &(c, o)) in batch.pairs.iter().enumerate() {
            let u = self.input.row(c);
            gu.fill(0.0);
            let targets = std::iter::once((o, 1.0)).chain(batch.negatives[i * k..(i + 1) * k].iter().map(|&m| (m, 0.0)));
            for (t, y) in targets {
                let v = self.output.row(t);
                let s = crate::numkit::dot(u, v);
                total += if y > 0.0 { -log_sigmoid(s) } else { -log_sigmoid(-s) };
                let d = (sigmoid(s) - y) * scale;
                if !seen_out[t] {
                    seen_out[t] = true;
                    g.touched_output.push(t);
                }
                let go = g.output.row_mut(t);
                for j in 0..dim {
                    gu[j] += d * v[j];
                    go[j] += d * u[j];
                }
            }
            if !seen_in[c] {
                seen_in[c] = true;
                g.touched_input.push(c);
            }
            g.input.row_mut(c).iter_mut().zip(&gu).for_each(|(a, b)| *a += b);
        }
        total * scale
    }
}

/// Positive pairs of a walk within `window` positions on either side.
pub fn window_pairs(walk: &[NodeId], window: usize) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
    (0..walk.len()).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(walk.len());
        (lo..hi).filter(move |&j| j != i).map(move |j| (walk[i], walk[j]))
    })
}

/// Trains on `walks` over `n` nodes with lazy row-wise Adam.
pub fn train_skipgram(walks: &[Vec<NodeId>], n: usize, cfg: &SkipGramConfig, seed: u64) -> Result<(SkipGram, SgnsReport)> {
    if walks.iter().all(|w| w.len() < 2) {
        return Err(Error::invalid("skip-gram needs at least one walk with two nodes"));
    }
    if cfg.dim == 0 || cfg.batch_size == 0 || cfg.window == 0 {
        return Err(Error::invalid("skip-gram dim, batch size and window must be positive"));
    }
    let mut counts = vec![0.0; n];
    walks.iter().flatten().for_each(|&u| counts[u] += 1.0);
    let noise = noise_cdf(&counts, cfg.noise_exponent);
    let k = cfg.negatives_per_positive;
    let fill_negatives = |batch: &mut SgnsBatch, path: &[u64]| {
        let mut rng = stream(seed, path);
        batch.negatives.clear();
        batch
            .negatives
            .extend((0..batch.pairs.len() * k).map(|_| sample_cdf(&noise, &mut rng)));
    };

    let mut model = SkipGram::init(n, cfg.dim, seed);
    let mut probe = SgnsBatch {
        pairs: walks
            .iter()
            .flat_map(|w| window_pairs(w, cfg.window))
            .take(cfg.batch_size)
            .collect(),
        negatives: Vec::new(),
    };
    fill_negatives(&mut probe, &[label("sgns-probe")]);
    let initial_loss = model.batch_loss(&probe);

    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut opt_in = RowAdam::new(adam, n, cfg.dim);
    let mut opt_out = RowAdam::new(adam, n, cfg.dim);
    let mut grads = SgnsGrads::new(n, cfg.dim);
    let mut seen_in = vec![false; n];
    let mut seen_out = vec![false; n];
    let mut batch = SgnsBatch::default();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut pairs = walks.iter().flat_map(|w| window_pairs(w, cfg.window));
        let (mut total, mut count, mut b) = (0.0, 0usize, 0u64);
        loop {
            batch.pairs.clear();
            batch.pairs.extend(pairs.by_ref().take(cfg.batch_size));
            if batch.pairs.is_empty() {
                break;
            }
            fill_negatives(&mut batch, &[label("sgns-neg"), epoch as u64, b]);
            grads.clear();
            seen_in.fill(false);
            seen_out.fill(false);
            let loss = model.accumulate(&batch, &mut grads, &mut seen_in, &mut seen_out);
            if !loss.is_finite() {
                return Err(Error::NonFinite("skip-gram loss"));
            }
            total += loss * batch.pairs.len() as f64;
            count += batch.pairs.len();
            opt_in.begin_step();
            opt_out.begin_step();
            for &r in &grads.touched_input {
                opt_in.update_row(r, model.input.row_mut(r), grads.input.row(r));
            }
            for &r in &grads.touched_output {
                opt_out.update_row(r, model.output.row_mut(r), grads.output.row(r));
            }
            b += 1;
        }
        epoch_losses.push(total / count.max(1) as f64);
    }
    let final_loss = model.batch_loss(&probe);
    Ok((
        model,
        SgnsReport {
            initial_loss,
            final_loss,
            epoch_losses,
        },
    ))
}
