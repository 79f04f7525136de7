//! Attribute-mapping embeddings: a node's vector is a fixed function of its
//! features, trained so that walk co-occurring nodes score high against
//! free context vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::numkit::rng::{derive_seed, label, stream};
use crate::numkit::{dot, log_sigmoid, sigmoid, AdamConfig, AdamState, Dense, RowAdam};

use super::sage::walk_context_pairs;
use super::walks::{WalkConfig, WalkGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mapping {
    #[default]
    Sigmoid,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Attri2VecConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub mapping: Mapping,
    /// Only `walks_per_node`, `walk_length` and `negatives_per_positive` are used.
    pub walk: WalkConfig,
    pub batch_size: usize,
}

impl Default for Attri2VecConfig {
    fn default() -> Self {
        Attri2VecConfig {
            hidden_dim: 128,
            epochs: 10,
            learning_rate: 1e-2,
            mapping: Mapping::Sigmoid,
            walk: WalkConfig {
                walks_per_node: 4,
                walk_length: 5,
                window: 1,
                negatives_per_positive: 1,
                ..WalkConfig::default()
            },
            batch_size: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attri2Vec {
    pub mapping: Mapping,
    /// `hidden_dim x feature_dim`.
    pub weights: Dense,
    /// One free vector per node.
    pub context: Dense,
}

impl Attri2Vec {
    pub fn init(n: usize, feature_dim: usize, cfg: &Attri2VecConfig, seed: u64) -> Self {
        let mut rng = stream(seed, &[label("a2v-init")]);
        let limit = (6.0 / (feature_dim + cfg.hidden_dim) as f64).sqrt();
        let w = (0..cfg.hidden_dim * feature_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        let c = (0..n * cfg.hidden_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Attri2Vec {
            mapping: cfg.mapping,
            weights: Dense::from_vec(cfg.hidden_dim, feature_dim, w).expect("finite init"),
            context: Dense::from_vec(n, cfg.hidden_dim, c).expect("finite init"),
        }
    }

    /// Embedding of any feature vector, seen during training or not.
    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|o| {
                let z = dot(self.weights.row(o), x);
                match self.mapping {
                    Mapping::Sigmoid => sigmoid(z),
                    Mapping::Linear => z,
                }
            })
            .collect()
    }

    pub fn embed(&self, x: &Dense) -> Result<Dense> {
        if x.cols() != self.weights.cols() {
            return Err(Error::Shape(format!(
                "{} feature columns, model expects {}",
                x.cols(),
                self.weights.cols()
            )));
        }
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|u| self.map(x.row(u))).collect();
        Dense::from_rows(&rows)
    }

    /// Mean BCE over `(target, context, label)` pairs with gradients for the
    /// mapping and the context table.
    pub fn pair_loss_grad(&self, x: &Dense, pairs: &[(usize, usize, f64)]) -> (f64, Dense, Dense) {
        let mut gw = Dense::zeros(self.weights.rows(), self.weights.cols());
        let mut gc = Dense::zeros(self.context.rows(), self.context.cols());
        let scale = 1.0 / pairs.len().max(1) as f64;
        let mut total = 0.0;
        for &(u, v, y) in pairs {
            let e = self.map(x.row(u));
            let c = self.context.row(v);
            let s = dot(&e, c);
            total -= y * log_sigmoid(s) + (1.0 - y) * log_sigmoid(-s);
            let d = (sigmoid(s) - y) * scale;
            gc.row_mut(v).iter_mut().zip(&e).for_each(|(g, a)| *g += d * a);
            for o in 0..e.len() {
                let local = match self.mapping {
                    Mapping::Sigmoid => e[o] * (1.0 - e[o]),
                    Mapping::Linear => 1.0,
                };
                let de = d * c[o] * local;
                gw.row_mut(o)
                    .iter_mut()
                    .zip(x.row(u))
                    .for_each(|(g, xi)| *g += de * xi);
            }
        }
        (total * scale, gw, gc)
    }
}

pub fn train_attri2vec(net: &Network, x: &Dense, cfg: &Attri2VecConfig, seed: u64) -> Result<(Attri2Vec, Vec<f64>)> {
    if cfg.hidden_dim == 0 || cfg.batch_size == 0 || cfg.walk.walk_length < 2 {
        return Err(Error::invalid("attri2vec needs hidden_dim, batch size > 0 and walks of length >= 2"));
    }
    if x.rows() != net.node_count() {
        return Err(Error::Shape(format!("{} feature rows for {} nodes", x.rows(), net.node_count())));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("node features"));
    }
    let g = WalkGraph::new(net);
    let n = net.node_count();
    let mut model = Attri2Vec::init(n, x.cols(), cfg, seed);
    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut opt_w = AdamState::new(adam, &[model.weights.as_slice().len()]);
    let mut opt_c = RowAdam::new(adam, n, cfg.hidden_dim);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let pairs = walk_context_pairs(
            &g,
            cfg.walk.walks_per_node,
            cfg.walk.walk_length,
            cfg.walk.negatives_per_positive,
            derive_seed(seed, &[label("a2v-pairs"), epoch as u64]),
        );
        if pairs.is_empty() {
            return Err(Error::invalid("graph has no edges to sample training pairs from"));
        }
        let mut total = 0.0;
        for chunk in pairs.chunks(cfg.batch_size) {
            let (loss, gw, gc) = model.pair_loss_grad(x, chunk);
            total += loss * chunk.len() as f64;
            opt_w.step(&mut [model.weights.as_mut_slice()], &[gw.as_slice()])?;
            opt_c.begin_step();
            let mut rows: Vec<usize> = chunk.iter().map(|p| p.1).collect();
            rows.sort_unstable();
            rows.dedup();
            for r in rows {
                opt_c.update_row(r, model.context.row_mut(r), gc.row(r));
            }
        }
        curve.push(total / pairs.len() as f64);
    }
    Ok((model, curve))
}
