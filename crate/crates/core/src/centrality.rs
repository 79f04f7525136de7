//! Degree, eigenvector and betweenness centrality on the unweighted skeleton
//! of an undirected network.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    Degree,
    Eigenvector,
    Betweenness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentralityVector {
    pub measure: Measure,
    pub values: Vec<f64>,
    pub normalization: &'static str,
}

fn require_undirected(net: &Network) -> Result<()> {
    if net.is_directed() {
        return Err(Error::invalid("centrality is defined here for undirected networks only"));
    }
    Ok(())
}

/// `deg(u) / (n - 1)`.
pub fn degree_centrality(net: &Network) -> Result<CentralityVector> {
    require_undirected(net)?;
    let n = net.node_count();
    if n < 2 {
        return Err(Error::invalid(format!("degree centrality needs at least 2 nodes, got {n}")));
    }
    let denom = (n - 1) as f64;
    Ok(CentralityVector {
        measure: Measure::Degree,
        values: (0..n).map(|u| net.degree(u) as f64 / denom).collect(),
        normalization: "degree/(n-1)",
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Dominant adjacency eigenvector by power iteration from the uniform vector.
///
/// Iterates with `A + I`: same eigenvectors, but the shift keeps bipartite
/// graphs (spectrum symmetric about zero) from oscillating. Output is
/// L2-normalized and nonnegative; isolated nodes are exactly zero.
pub fn eigenvector_centrality(net: &Network, cfg: EigenConfig) -> Result<CentralityVector> {
    require_undirected(net)?;
    let n = net.node_count();
    if net.edge_count() == 0 {
        return Err(Error::invalid("eigenvector centrality of a graph without edges"));
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut delta = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        for (u, out) in next.iter_mut().enumerate() {
            *out = x[u] + net.adj(u).iter().map(|&(v, _)| x[v]).sum::<f64>();
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        next.iter_mut().for_each(|v| *v /= norm);
        delta = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut x, &mut next);
        if delta < cfg.tol {
            for (u, v) in x.iter_mut().enumerate() {
                if net.degree(u) == 0 {
                    *v = 0.0;
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v = (*v / norm).max(0.0));
            return Ok(CentralityVector {
                measure: Measure::Eigenvector,
                values: x,
                normalization: "l2",
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        delta,
    })
}

const SOURCE_CHUNK: usize = 64;

/// Brandes accumulation over all sources, halved so each unordered pair
/// counts once. Unreachable pairs contribute nothing.
pub fn betweenness_centrality(net: &Network) -> Result<CentralityVector> {
    require_undirected(net)?;
    let n = net.node_count();
    // Fixed-size source chunks summed in order: independent of thread count.
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(SOURCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n];
            let mut work = BrandesWork::new(n);
            for s in (c * SOURCE_CHUNK)..((c + 1) * SOURCE_CHUNK).min(n) {
                work.accumulate_from(net, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut values = vec![0.0; n];
    for p in &partials {
        for (v, x) in values.iter_mut().zip(p) {
            *v += x;
        }
    }
    values.iter_mut().for_each(|v| *v *= 0.5);
    Ok(CentralityVector {
        measure: Measure::Betweenness,
        values,
        normalization: "raw/2",
    })
}

struct BrandesWork {
    stack: Vec<usize>,
    preds: Vec<Vec<usize>>,
    sigma: Vec<f64>,
    dist: Vec<i64>,
    delta: Vec<f64>,
    queue: VecDeque<usize>,
}

impl BrandesWork {
    fn new(n: usize) -> Self {
        BrandesWork {
            stack: Vec::with_capacity(n),
            preds: vec![Vec::new(); n],
            sigma: vec![0.0; n],
            dist: vec![-1; n],
            delta: vec![0.0; n],
            queue: VecDeque::with_capacity(n),
        }
    }

    fn accumulate_from(&mut self, net: &Network, s: usize, acc: &mut [f64]) {
        for &v in &self.stack {
            self.preds[v].clear();
            self.sigma[v] = 0.0;
            self.dist[v] = -1;
            self.delta[v] = 0.0;
        }
        self.stack.clear();
        self.sigma[s] = 1.0;
        self.dist[s] = 0;
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            self.stack.push(v);
            for &(w, _) in net.adj(v) {
                if self.dist[w] < 0 {
                    self.dist[w] = self.dist[v] + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == self.dist[v] + 1 {
                    self.sigma[w] += self.sigma[v];
                    self.preds[w].push(v);
                }
            }
        }
        for i in (0..self.stack.len()).rev() {
            let w = self.stack[i];
            let coeff = (1.0 + self.delta[w]) / self.sigma[w];
            for j in 0..self.preds[w].len() {
                let v = self.preds[w][j];
                self.delta[v] += self.sigma[v] * coeff;
            }
            if w != s {
                acc[w] += self.delta[w];
            }
        }
    }
}

/// All three measures for a professional network, plus whether each node
/// carries background data (`has_background` attribute, 1 when absent).
#[derive(Clone, Debug)]
pub struct CentralityTable {
    pub physician_ids: Vec<String>,
    pub degree: Vec<f64>,
    pub eigenvector: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub in_professional_net: Vec<bool>,
}

impl CentralityTable {
    pub fn compute(net: &Network, eigen: EigenConfig) -> Result<Self> {
        let skeleton = net.skeleton();
        let has_bg = net
            .attribute_names()
            .iter()
            .position(|n| n == "has_background");
        let eigenvector = if skeleton.edge_count() == 0 {
            vec![0.0; skeleton.node_count()]
        } else {
            eigenvector_centrality(&skeleton, eigen)?.values
        };
        Ok(CentralityTable {
            physician_ids: net.external_ids().to_vec(),
            degree: degree_centrality(&skeleton)?.values,
            eigenvector,
            betweenness: betweenness_centrality(&skeleton)?.values,
            in_professional_net: (0..net.node_count())
                .map(|u| has_bg.is_none_or(|c| net.attributes(u)[c] > 0.0))
                .collect(),
        })
    }

    pub fn lookup(&self) -> std::collections::HashMap<&str, usize> {
        self.physician_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["node_id", "degree", "eigenvector", "betweenness", "in_professional_net"])?;
        for i in 0..self.physician_ids.len() {
            wtr.write_record([
                self.physician_ids[i].clone(),
                format!("{:.12}", self.degree[i]),
                format!("{:.12}", self.eigenvector[i]),
                format!("{:.9}", self.betweenness[i]),
                u8::from(self.in_professional_net[i]).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<centrality csv>", e))?;
        Ok(())
    }
}
