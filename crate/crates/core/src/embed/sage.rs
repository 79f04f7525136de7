//! Two-layer mean-aggregator GraphSAGE trained without supervision on
//! random-walk co-occurrence.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Network, NodeId};
use crate::numkit::rng::{label, stream, Rng as StreamRng};
use crate::numkit::{dot, log_sigmoid, sigmoid, AdamConfig, AdamState, Dense};

use super::walks::{noise_cdf, sample_cdf, WalkGraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SageConfig {
    pub layer_sizes: [usize; 2],
    pub epochs: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub neighbor_samples: [usize; 2],
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
}

impl Default for SageConfig {
    fn default() -> Self {
        SageConfig {
            layer_sizes: [20, 20],
            epochs: 20,
            dropout: 0.3,
            learning_rate: 1e-3,
            neighbor_samples: [10, 5],
            walk_length: 5,
            walks_per_node: 1,
            negatives_per_positive: 1,
            batch_size: 50,
        }
    }
}

impl SageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.contains(&0) || self.neighbor_samples.contains(&0) {
            return Err(Error::invalid("layer sizes and neighbor samples must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.walk_length < 2 || self.walks_per_node == 0 || self.batch_size == 0 {
            return Err(Error::invalid("walk length >= 2, walks and batch size positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SageModel {
    /// `h1 x 2f`, acting on `[self ‖ neighbor mean]`.
    pub w1: Dense,
    pub b1: Vec<f64>,
    /// `h2 x 2h1`.
    pub w2: Dense,
    pub b2: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SageGrads {
    pub w1: Dense,
    pub b1: Vec<f64>,
    pub w2: Dense,
    pub b2: Vec<f64>,
}

/// A root, its first-hop samples, and second-hop samples of each first-hop node.
#[derive(Clone, Debug, PartialEq)]
pub struct SageTree {
    pub root: NodeId,
    pub hop1: Vec<NodeId>,
    pub hop2: Vec<Vec<NodeId>>,
}

/// One `(u, v, label)` training example.
pub type SagePair = (SageTree, SageTree, f64);

struct Cache {
    /// Layer-1 inputs (after dropout) for the root then each hop-1 node.
    in1: Vec<Vec<f64>>,
    pre1: Vec<Vec<f64>>,
    in2: Vec<f64>,
    mask2: Option<Vec<f64>>,
    out: Vec<f64>,
    norm: f64,
}

fn glorot(rows: usize, cols: usize, rng: &mut StreamRng) -> Dense {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Dense::from_vec(rows, cols, data).expect("finite init")
}

fn mean_rows(x: &Dense, ids: &[NodeId]) -> Vec<f64> {
    let mut m = vec![0.0; x.cols()];
    for &u in ids {
        m.iter_mut().zip(x.row(u)).for_each(|(a, b)| *a += b);
    }
    if !ids.is_empty() {
        let s = 1.0 / ids.len() as f64;
        m.iter_mut().for_each(|a| *a *= s);
    }
    m
}

fn affine(w: &Dense, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|o| b[o] + dot(w.row(o), x)).collect()
}

fn dropout_mask(len: usize, p: f64, rng: &mut StreamRng) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

fn l2_normalize(z: Vec<f64>) -> (Vec<f64>, f64) {
    let norm = dot(&z, &z).sqrt();
    if norm == 0.0 {
        (z, 0.0)
    } else {
        (z.iter().map(|v| v / norm).collect(), norm)
    }
}

impl SageGrads {
    fn zeros_like(m: &SageModel) -> Self {
        SageGrads {
            w1: Dense::zeros(m.w1.rows(), m.w1.cols()),
            b1: vec![0.0; m.b1.len()],
            w2: Dense::zeros(m.w2.rows(), m.w2.cols()),
            b2: vec![0.0; m.b2.len()],
        }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }
}

impl SageModel {
    pub fn new(feature_dim: usize, sizes: [usize; 2], seed: u64) -> Self {
        let mut rng = stream(seed, &[label("sage-init")]);
        SageModel {
            w1: glorot(sizes[0], 2 * feature_dim, &mut rng),
            b1: vec![0.0; sizes[0]],
            w2: glorot(sizes[1], 2 * sizes[0], &mut rng),
            b2: vec![0.0; sizes[1]],
        }
    }

    pub fn zeros(feature_dim: usize, sizes: [usize; 2]) -> Self {
        SageModel {
            w1: Dense::zeros(sizes[0], 2 * feature_dim),
            b1: vec![0.0; sizes[0]],
            w2: Dense::zeros(sizes[1], 2 * sizes[0]),
            b2: vec![0.0; sizes[1]],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.w1.cols() / 2
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }

    fn block_sizes(&self) -> [usize; 4] {
        [self.w1.as_slice().len(), self.b1.len(), self.w2.as_slice().len(), self.b2.len()]
    }

    fn forward(&self, x: &Dense, tree: &SageTree, dropout: Option<(f64, &mut StreamRng)>) -> Cache {
        let mut units: Vec<Vec<f64>> = Vec::with_capacity(1 + tree.hop1.len());
        let mut root_in = x.row(tree.root).to_vec();
        root_in.extend(mean_rows(x, &tree.hop1));
        units.push(root_in);
        for (i, &u) in tree.hop1.iter().enumerate() {
            let mut v = x.row(u).to_vec();
            v.extend(mean_rows(x, &tree.hop2[i]));
            units.push(v);
        }
        let mut dropout = dropout;
        if let Some((p, rng)) = dropout.as_mut() {
            for v in &mut units {
                let m = dropout_mask(v.len(), *p, rng);
                v.iter_mut().zip(&m).for_each(|(a, k)| *a *= k);
            }
        }
        let pre1: Vec<Vec<f64>> = units.iter().map(|v| affine(&self.w1, &self.b1, v)).collect();
        let relu = |v: &Vec<f64>| v.iter().map(|a| a.max(0.0)).collect::<Vec<_>>();
        let h_root = relu(&pre1[0]);
        let mut h_mean = vec![0.0; self.b1.len()];
        for p in &pre1[1..] {
            h_mean.iter_mut().zip(p).for_each(|(a, b)| *a += b.max(0.0));
        }
        if pre1.len() > 1 {
            let s = 1.0 / (pre1.len() - 1) as f64;
            h_mean.iter_mut().for_each(|a| *a *= s);
        }
        let mut in2 = h_root;
        in2.extend(h_mean);
        let mask2 = dropout.map(|(p, rng)| dropout_mask(in2.len(), p, rng));
        if let Some(m) = &mask2 {
            in2.iter_mut().zip(m).for_each(|(a, k)| *a *= k);
        }
        let (out, norm) = l2_normalize(affine(&self.w2, &self.b2, &in2));
        Cache {
            in1: units,
            pre1,
            in2,
            mask2,
            out,
            norm,
        }
    }

    fn backward(&self, c: &Cache, g_out: &[f64], grads: &mut SageGrads) {
        if c.norm == 0.0 {
            return;
        }
        let proj = dot(&c.out, g_out);
        let dz: Vec<f64> = g_out.iter().zip(&c.out).map(|(g, o)| (g - o * proj) / c.norm).collect();
        let (h2, w2c) = (self.w2.rows(), self.w2.cols());
        let mut din2 = vec![0.0; w2c];
        for o in 0..h2 {
            grads.b2[o] += dz[o];
            let gw = grads.w2.row_mut(o);
            let w = self.w2.row(o);
            for j in 0..w2c {
                gw[j] += dz[o] * c.in2[j];
                din2[j] += dz[o] * w[j];
            }
        }
        if let Some(m) = &c.mask2 {
            din2.iter_mut().zip(m).for_each(|(a, k)| *a *= k);
        }
        let h1 = self.b1.len();
        let m = c.pre1.len() - 1;
        for (unit, pre) in c.pre1.iter().enumerate() {
            let scale = if unit == 0 { 1.0 } else { 1.0 / m as f64 };
            let off = if unit == 0 { 0 } else { h1 };
            for o in 0..h1 {
                if pre[o] <= 0.0 {
                    continue;
                }
                let d = din2[off + o] * scale;
                grads.b1[o] += d;
                grads.w1
                    .row_mut(o)
                    .iter_mut()
                    .zip(&c.in1[unit])
                    .for_each(|(g, x)| *g += d * x);
            }
        }
    }

    /// Mean BCE on `σ(z_u·z_v)` and its gradient, without dropout.
    pub fn pair_loss_grad(&self, x: &Dense, pairs: &[SagePair]) -> (f64, SageGrads) {
        self.pair_step(x, pairs, None)
    }

    fn pair_step(&self, x: &Dense, pairs: &[SagePair], dropout: Option<(f64, u64)>) -> (f64, SageGrads) {
        let mut grads = SageGrads::zeros_like(self);
        let scale = 1.0 / pairs.len().max(1) as f64;
        let mut total = 0.0;
        for (i, (a, b, y)) in pairs.iter().enumerate() {
            let mut rngs = dropout.map(|(_, s)| {
                (
                    stream(s, &[i as u64, 0]),
                    stream(s, &[i as u64, 1]),
                )
            });
            let (ca, cb) = match (&mut rngs, dropout) {
                (Some((ra, rb)), Some((p, _))) => (self.forward(x, a, Some((p, ra))), self.forward(x, b, Some((p, rb)))),
                _ => (self.forward(x, a, None), self.forward(x, b, None)),
            };
            let s = dot(&ca.out, &cb.out);
            total -= y * log_sigmoid(s) + (1.0 - y) * log_sigmoid(-s);
            let d = (sigmoid(s) - y) * scale;
            let ga: Vec<f64> = cb.out.iter().map(|v| d * v).collect();
            let gb: Vec<f64> = ca.out.iter().map(|v| d * v).collect();
            self.backward(&ca, &ga, &mut grads);
            self.backward(&cb, &gb, &mut grads);
        }
        (total * scale, grads)
    }

    /// Embeddings with full neighborhoods at both hops.
    pub fn embed(&self, g: &WalkGraph, x: &Dense) -> Result<Dense> {
        if x.cols() != self.feature_dim() || x.rows() != g.node_count() {
            return Err(Error::Shape(format!(
                "features are {}x{}, model expects {} nodes x {}",
                x.rows(),
                x.cols(),
                g.node_count(),
                self.feature_dim()
            )));
        }
        let n = g.node_count();
        let neighbors: Vec<Vec<NodeId>> = (0..n).map(|u| g.network().adj(u).iter().map(|e| e.0).collect()).collect();
        let h1: Vec<Vec<f64>> = (0..n)
            .map(|u| {
                let mut v = x.row(u).to_vec();
                v.extend(mean_rows(x, &neighbors[u]));
                affine(&self.w1, &self.b1, &v).into_iter().map(|a| a.max(0.0)).collect()
            })
            .collect();
        let h1 = Dense::from_rows(&h1)?;
        let mut out = Dense::zeros(n, self.output_dim());
        for u in 0..n {
            let mut v = h1.row(u).to_vec();
            v.extend(mean_rows(&h1, &neighbors[u]));
            let (z, _) = l2_normalize(affine(&self.w2, &self.b2, &v));
            out.row_mut(u).copy_from_slice(&z);
        }
        Ok(out)
    }
}

pub fn sample_tree(g: &WalkGraph, root: NodeId, samples: [usize; 2], rng: &mut StreamRng) -> SageTree {
    let draw = |u: NodeId, k: usize, rng: &mut StreamRng| -> Vec<NodeId> {
        if g.degree(u) == 0 {
            return Vec::new();
        }
        (0..k).filter_map(|_| g.uniform_neighbor(u, rng)).collect()
    };
    let hop1 = draw(root, samples[0], rng);
    let hop2 = hop1.iter().map(|&u| draw(u, samples[1], rng)).collect();
    SageTree { root, hop1, hop2 }
}

/// Target-context pairs from short uniform walks, each followed by its
/// negatives drawn from the degree^0.75 distribution.
pub(crate) fn walk_context_pairs(
    g: &WalkGraph,
    walks_per_node: usize,
    walk_length: usize,
    negatives: usize,
    seed: u64,
) -> Vec<(NodeId, NodeId, f64)> {
    let n = g.node_count();
    let degrees: Vec<f64> = (0..n).map(|u| g.degree(u) as f64).collect();
    let noise = noise_cdf(&degrees, 0.75);
    let mut pairs = Vec::new();
    let mut neg_rng = stream(seed, &[label("ctx-neg")]);
    for r in 0..walks_per_node {
        for u in 0..n {
            let mut rng = stream(seed, &[label("ctx-walk"), u as u64, r as u64]);
            let mut walk = vec![u];
            while walk.len() < walk_length {
                match g.uniform_neighbor(*walk.last().unwrap(), &mut rng) {
                    Some(v) => walk.push(v),
                    None => break,
                }
            }
            for &v in &walk[1..] {
                pairs.push((u, v, 1.0));
                for _ in 0..negatives {
                    pairs.push((u, sample_cdf(&noise, &mut neg_rng), 0.0));
                }
            }
        }
    }
    let mut rng = stream(seed, &[label("ctx-shuffle")]);
    pairs.shuffle(&mut rng);
    pairs
}

/// Trains on the network's undirected view; returns the model and per-epoch mean loss.
pub fn train_graphsage(net: &Network, x: &Dense, cfg: &SageConfig, seed: u64) -> Result<(SageModel, Vec<f64>)> {
    cfg.validate()?;
    if x.rows() != net.node_count() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            x.rows(),
            net.node_count()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("node features"));
    }
    let g = WalkGraph::new(net);
    let mut model = SageModel::new(x.cols(), cfg.layer_sizes, seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), &model.block_sizes());
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        let pairs = walk_context_pairs(
            &g,
            cfg.walks_per_node,
            cfg.walk_length,
            cfg.negatives_per_positive,
            crate::numkit::rng::derive_seed(seed, &[label("sage-pairs"), e]),
        );
        if pairs.is_empty() {
            return Err(Error::invalid("graph has no edges to sample training pairs from"));
        }
        let mut total = 0.0;
        for (b, chunk) in pairs.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<SagePair> = chunk
                .iter()
                .enumerate()
                .map(|(i, &(u, v, y))| {
                    let mut rng = stream(seed, &[label("sage-tree"), e, b as u64, i as u64]);
                    (
                        sample_tree(&g, u, cfg.neighbor_samples, &mut rng),
                        sample_tree(&g, v, cfg.neighbor_samples, &mut rng),
                        y,
                    )
                })
                .collect();
            let drop_seed = crate::numkit::rng::derive_seed(seed, &[label("sage-drop"), e, b as u64]);
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, drop_seed));
            let (loss, grads) = model.pair_step(x, &batch, dropout);
            total += loss * chunk.len() as f64;
            adam.step(&mut model.blocks_mut(), &grads.blocks())?;
        }
        curve.push(total / pairs.len() as f64);
    }
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_gives_identical_embeddings() {
        let mut net = Network::new(3, false);
        net.add_edge(0, 1, 1.0).unwrap();
        let m = SageModel::zeros(2, [4, 3]);
        let x = Dense::zeros(3, 2);
        let z = m.embed(&WalkGraph::new(&net), &x).unwrap();
        assert_eq!(z.row(0), z.row(1));
        assert_eq!(z.row(1), z.row(2));
    }

    #[test]
    fn isolated_root_has_empty_tree() {
        let g = WalkGraph::new(&Network::new(2, false));
        let t = sample_tree(&g, 0, [3, 2], &mut stream(1, &[]));
        assert!(t.hop1.is_empty() && t.hop2.is_empty());
    }

    #[test]
    fn config_rejects_full_dropout() {
        let cfg = SageConfig {
            dropout: 1.0,
            ..SageConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
