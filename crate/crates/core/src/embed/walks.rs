//! First- and second-order random walks over a network treated as undirected.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Network, NodeId};
use crate::numkit::rng::{label, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub return_p: f64,
    pub inout_q: f64,
    pub window: usize,
    pub negatives_per_positive: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            return_p: 1.0,
            inout_q: 1.0,
            window: 5,
            negatives_per_positive: 5,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 || self.walk_length == 0 || self.window == 0 {
            return Err(Error::invalid("walk counts, length and window must be positive"));
        }
        if self.window >= self.walk_length {
            return Err(Error::invalid(format!(
                "window {} must be shorter than walk length {}",
                self.window, self.walk_length
            )));
        }
        if !(self.return_p > 0.0 && self.inout_q > 0.0) {
            return Err(Error::invalid("return_p and inout_q must be positive"));
        }
        Ok(())
    }
}

/// Undirected view with per-node cumulative weights for first-order steps.
pub struct WalkGraph {
    net: Network,
    cdf: Vec<Vec<f64>>,
}

impl WalkGraph {
    pub fn new(net: &Network) -> Self {
        let net = net.to_undirected();
        let cdf = (0..net.node_count())
            .map(|u| {
                let mut acc = 0.0;
                net.adj(u)
                    .iter()
                    .map(|&(_, w)| {
                        acc += w;
                        acc
                    })
                    .collect()
            })
            .collect();
        WalkGraph { net, cdf }
    }

    pub fn node_count(&self) -> usize {
        self.net.node_count()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.net.degree(u)
    }

    /// Weighted first-order step; `None` at a dead end.
    pub fn step(&self, v: NodeId, rng: &mut impl Rng) -> Option<NodeId> {
        let cdf = &self.cdf[v];
        let total = *cdf.last()?;
        let u = rng.gen::<f64>() * total;
        let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        Some(self.net.adj(v)[i].0)
    }

    /// Uniform neighbor, ignoring weights.
    pub fn uniform_neighbor(&self, v: NodeId, rng: &mut impl Rng) -> Option<NodeId> {
        let adj = self.net.adj(v);
        (!adj.is_empty()).then(|| adj[rng.gen_range(0..adj.len())].0)
    }

    /// Unnormalized second-order transition weights out of `v` having arrived from `t`.
    pub fn second_order_weights(&self, t: NodeId, v: NodeId, p: f64, q: f64) -> Vec<f64> {
        self.net
            .adj(v)
            .iter()
            .map(|&(x, w)| {
                if x == t {
                    w / p
                } else if self.net.has_edge(t, x) {
                    w
                } else {
                    w / q
                }
            })
            .collect()
    }

    fn second_order_step(&self, t: NodeId, v: NodeId, p: f64, q: f64, rng: &mut impl Rng) -> Option<NodeId> {
        let w = self.second_order_weights(t, v, p, q);
        let total: f64 = w.iter().sum();
        if w.is_empty() || total <= 0.0 {
            return None;
        }
        let mut u = rng.gen::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                return Some(self.net.adj(v)[i].0);
            }
            u -= wi;
        }
        Some(self.net.adj(v)[w.len() - 1].0)
    }

    pub fn walk(&self, start: NodeId, length: usize, p: f64, q: f64, rng: &mut impl Rng) -> Vec<NodeId> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start);
        let first_order = p == 1.0 && q == 1.0;
        while walk.len() < length {
            let v = walk[walk.len() - 1];
            let next = match walk.len() {
                1 => self.step(v, rng),
                _ if first_order => self.step(v, rng),
                k => self.second_order_step(walk[k - 2], v, p, q, rng),
            };
            match next {
                Some(x) => walk.push(x),
                None => break,
            }
        }
        walk
    }
}

/// `walks_per_node` walks from every node, ordered by (walk index, start node).
pub fn biased_walks(net: &Network, cfg: &WalkConfig, seed: u64) -> Result<Vec<Vec<NodeId>>> {
    cfg.validate()?;
    if net.node_count() == 0 {
        return Err(Error::invalid("cannot walk an empty network"));
    }
    let g = WalkGraph::new(net);
    Ok(walks_on(&g, cfg.walks_per_node, cfg.walk_length, cfg.return_p, cfg.inout_q, seed))
}

pub(crate) fn walks_on(g: &WalkGraph, per_node: usize, length: usize, p: f64, q: f64, seed: u64) -> Vec<Vec<NodeId>> {
    let n = g.node_count();
    (0..per_node * n)
        .into_par_iter()
        .map(|k| {
            let (r, u) = (k / n, k % n);
            let mut rng = stream(seed, &[label("walk"), u as u64, r as u64]);
            g.walk(u, length, p, q, &mut rng)
        })
        .collect()
}

/// Cumulative `count^exponent` table for negative sampling.
pub(crate) fn noise_cdf(counts: &[f64], exponent: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = counts
        .iter()
        .map(|&c| {
            acc += c.powf(exponent);
            acc
        })
        .collect();
    if acc == 0.0 {
        cdf.iter_mut().enumerate().for_each(|(i, c)| *c = (i + 1) as f64);
    }
    cdf
}

pub(crate) fn sample_cdf(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Network {
        let mut g = Network::new(3, false);
        g.add_edge(0, 1, 1.0).unwrap();
        g.add_edge(1, 2, 1.0).unwrap();
        g
    }

    #[test]
    fn isolated_node_walk_has_length_one() {
        let g = Network::new(2, false);
        let walks = biased_walks(&g, &WalkConfig::default(), 1).unwrap();
        assert!(walks.iter().all(|w| w.len() == 1));
        assert_eq!(walks.len(), 20);
    }

    #[test]
    fn large_q_returns_toward_origin() {
        let g = WalkGraph::new(&path3());
        let w = g.second_order_weights(0, 1, 1.0, 1e6);
        // neighbors of 1 are [0, 2]
        assert!(w[0] / (w[0] + w[1]) > 1.0 - 1e-5);
    }

    #[test]
    fn walks_are_reproducible() {
        let cfg = WalkConfig {
            walk_length: 10,
            return_p: 0.5,
            inout_q: 2.0,
            ..WalkConfig::default()
        };
        let a = biased_walks(&path3(), &cfg, 3).unwrap();
        assert_eq!(a, biased_walks(&path3(), &cfg, 3).unwrap());
        assert!(a.iter().all(|w| w.len() == 10));
    }

    #[test]
    fn window_must_be_shorter_than_walk() {
        let cfg = WalkConfig {
            walk_length: 5,
            window: 5,
            ..WalkConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
