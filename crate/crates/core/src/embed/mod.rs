//! Node embeddings over the referral network.
//!
//! Three learners share the walk machinery in [`walks`]: skip-gram over
//! second-order walks ([`skipgram`]), mean-aggregator GraphSAGE ([`sage`]) and
//! feature-mapped Attri2Vec ([`attri2vec`]). Node features come from
//! [`node_features`] and are scaled with a [`FeatureScaler`].

pub mod attri2vec;
pub mod sage;
pub mod skipgram;
pub mod walks;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::centrality::CentralityTable;
use crate::error::{Error, Result};
use crate::graph::Network;
use crate::ingest::PhysicianTable;
use crate::numkit::Dense;

pub use attri2vec::{train_attri2vec, Attri2Vec, Attri2VecConfig, Mapping};
pub use sage::{train_graphsage, SageConfig, SageModel};
pub use skipgram::{train_skipgram, SkipGram, SkipGramConfig};
pub use walks::{biased_walks, WalkConfig, WalkGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Node2Vec,
    GraphSage,
    Attri2Vec,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::GraphSage, ModelKind::Attri2Vec, ModelKind::Node2Vec];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Node2Vec => "node2vec",
            ModelKind::GraphSage => "graphsage",
            ModelKind::Attri2Vec => "attri2vec",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model {s:?} (node2vec, graphsage, attri2vec)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    WithSocial,
    WithoutSocial,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 2] = [FeatureSet::WithoutSocial, FeatureSet::WithSocial];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::WithSocial => "with_social",
            FeatureSet::WithoutSocial => "without_social",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            FeatureSet::WithSocial => &["age", "gender", "degree", "eigenvector", "betweenness", "missing_background"],
            FeatureSet::WithoutSocial => &["age", "gender"],
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature set {s:?} (with_social, without_social)")))
    }
}

/// Raw per-node features aligned with a network's node order.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures {
    pub names: Vec<String>,
    pub data: Dense,
}

/// Features for every node of `net` (matched by physician id). Ages use
/// imputation from [`PhysicianTable::ages`]; physicians absent from the
/// centrality table get zero centralities and the missing flag.
pub fn node_features(
    net: &Network,
    profiles: &PhysicianTable,
    centrality: Option<&CentralityTable>,
    set: FeatureSet,
    end_year: i32,
) -> Result<NodeFeatures> {
    let ages = profiles.ages(end_year)?;
    let lookup = centrality.map(|c| c.lookup());
    if set == FeatureSet::WithSocial && centrality.is_none() {
        return Err(Error::invalid("with_social features need centralities"));
    }
    let mut rows = Vec::with_capacity(net.node_count());
    let mut missing = Vec::new();
    for id in net.external_ids() {
        let Some(p) = profiles.get(id) else {
            missing.push(id.clone());
            continue;
        };
        let idx = profiles.index_of(id).expect("profile present");
        let mut row = vec![ages[idx].years, p.gender.code()];
        if set == FeatureSet::WithSocial {
            let c = centrality.unwrap();
            match lookup.as_ref().unwrap().get(id.as_str()) {
                Some(&k) => row.extend([
                    c.degree[k],
                    c.eigenvector[k],
                    c.betweenness[k],
                    if c.in_professional_net[k] { 0.0 } else { 1.0 },
                ]),
                None => row.extend([0.0, 0.0, 0.0, 1.0]),
            }
        }
        rows.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!("no physician profile for {}", missing.join(", "))));
    }
    let data = if rows.is_empty() {
        Dense::zeros(0, set.columns().len())
    } else {
        Dense::from_rows(&rows)?
    };
    Ok(NodeFeatures {
        names: set.columns().iter().map(|s| s.to_string()).collect(),
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnScale {
    Identity,
    ZScore { mean: f64, sd: f64 },
    MinMax { min: f64, max: f64 },
}

impl ColumnScale {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            ColumnScale::Identity => v,
            ColumnScale::ZScore { mean, sd } => (v - mean) / sd,
            ColumnScale::MinMax { min, max } => (v - min) / (max - min),
        }
    }
}

/// Ages z-scored, centralities min-max scaled, codes and flags untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub columns: Vec<ColumnScale>,
}

impl FeatureScaler {
    /// Fits on the rows where `fit_rows` is true (all rows when `None`).
    pub fn fit(f: &NodeFeatures, fit_rows: Option<&[bool]>) -> Self {
        let rows: Vec<usize> = (0..f.data.rows())
            .filter(|&r| fit_rows.is_none_or(|m| m[r]))
            .collect();
        let columns = f
            .names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let vals: Vec<f64> = rows.iter().map(|&r| f.data.get(r, c)).collect();
                match name.as_str() {
                    "age" if !vals.is_empty() => {
                        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                        let sd = var.sqrt();
                        ColumnScale::ZScore {
                            mean,
                            sd: if sd > 0.0 { sd } else { 1.0 },
                        }
                    }
                    "degree" | "eigenvector" | "betweenness" if !vals.is_empty() => {
                        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        if max > min {
                            ColumnScale::MinMax { min, max }
                        } else {
                            ColumnScale::ZScore { mean: min, sd: 1.0 }
                        }
                    }
                    _ => ColumnScale::Identity,
                }
            })
            .collect();
        FeatureScaler { columns }
    }

    pub fn transform(&self, f: &NodeFeatures) -> Dense {
        let mut out = f.data.clone();
        for r in 0..out.rows() {
            for (v, s) in out.row_mut(r).iter_mut().zip(&self.columns) {
                *v = s.apply(*v);
            }
        }
        out
    }
}

/// One embedding row per node of the network it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub node_ids: Vec<String>,
    pub model: ModelKind,
    pub features: FeatureSet,
    pub vectors: Dense,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (self.row(a), self.row(b));
        let d = crate::numkit::dot(x, y);
        let n = (crate::numkit::dot(x, x) * crate::numkit::dot(y, y)).sqrt();
        if n == 0.0 {
            0.0
        } else {
            d / n
        }
    }

    /// Appends `extra` columns to every row.
    pub fn concat(&self, extra: &Dense) -> Result<EmbeddingMatrix> {
        if extra.rows() != self.len() {
            return Err(Error::Shape(format!("{} extra rows for {} nodes", extra.rows(), self.len())));
        }
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|i| self.row(i).iter().chain(extra.row(i)).copied().collect())
            .collect();
        Ok(EmbeddingMatrix {
            vectors: if rows.is_empty() {
                Dense::zeros(0, self.dim() + extra.cols())
            } else {
                Dense::from_rows(&rows)?
            },
            ..self.clone()
        })
    }

    /// `node_id,e0,..,e{d-1}` with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["node_id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("e{j}")));
        wtr.write_record(&header)?;
        for (i, id) in self.node_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<embedding csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, model: ModelKind, features: FeatureSet) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let dim = rdr.headers()?.len().saturating_sub(1);
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|_| Error::invalid(format!("bad embedding value {s:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(EmbeddingMatrix {
            node_ids: ids,
            model,
            features,
            vectors: if rows.is_empty() { Dense::zeros(0, dim) } else { Dense::from_rows(&rows)? },
        })
    }
}

/// Projection onto the top two principal components. Component signs are
/// fixed so the largest-magnitude loading is positive.
pub fn pca_2d(x: &Dense) -> Vec<(f64, f64)> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return vec![(0.0, 0.0); n];
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let r = x.row(i);
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[a * d + b] = cov[b * d + a];
        }
    }
    let mut comps: Vec<Vec<f64>> = Vec::new();
    for k in 0..2.min(d) {
        let mut v: Vec<f64> = (0..d).map(|j| 1.0 + ((j * 7 + k * 3) % 11) as f64 * 0.1).collect();
        for _ in 0..1000 {
            let mut w: Vec<f64> = (0..d).map(|a| crate::numkit::dot(&cov[a * d..(a + 1) * d], &v)).collect();
            for c in &comps {
                let p = crate::numkit::dot(&w, c);
                w.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
            }
            let norm = crate::numkit::dot(&w, &w).sqrt();
            if norm < 1e-300 {
                break;
            }
            w.iter_mut().for_each(|a| *a /= norm);
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = w;
            if delta < 1e-12 {
                break;
            }
        }
        let lead = v.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
        if lead < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        comps.push(v);
    }
    (0..n)
        .map(|i| {
            let c: Vec<f64> = x.row(i).iter().zip(&mean).map(|(a, m)| a - m).collect();
            let p = |k: usize| comps.get(k).map_or(0.0, |v| crate::numkit::dot(&c, v));
            (p(0), p(1))
        })
        .collect()
}

/// `node_id,x,y,role,gender,birth_year,hospital` for external plotting.
pub fn write_projection_csv<W: Write>(emb: &EmbeddingMatrix, profiles: &PhysicianTable, out: W) -> Result<()> {
    let coords = pca_2d(&emb.vectors);
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["node_id", "x", "y", "role", "gender", "birth_year", "hospital"])?;
    for (id, (x, y)) in emb.node_ids.iter().zip(coords) {
        let p = profiles.get(id);
        wtr.write_record([
            id.clone(),
            format!("{x:.9}"),
            format!("{y:.9}"),
            p.map_or("unknown", |p| p.role.as_str()).to_string(),
            p.map_or(String::new(), |p| p.gender.as_str().to_string()),
            p.and_then(|p| p.birth_year).map_or(String::new(), |y| y.to_string()),
            p.and_then(|p| p.hospital_ids.iter().next().cloned()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<projection csv>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Node2VecConfig {
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub node2vec: Node2VecConfig,
    pub graphsage: SageConfig,
    pub attri2vec: Attri2VecConfig,
}

#[derive(Clone, Debug)]
pub struct EmbedOutput {
    pub matrix: EmbeddingMatrix,
    pub loss_curve: Vec<f64>,
}

/// Trains `model` on `net`. `x` holds scaled node features and is ignored by
/// node2vec, whose output is tagged with `set` all the same.
pub fn embed(net: &Network, x: &Dense, model: ModelKind, set: FeatureSet, cfg: &EmbedConfig, seed: u64) -> Result<EmbedOutput> {
    let (vectors, loss_curve) = match model {
        ModelKind::Node2Vec => {
            let walk = WalkConfig {
                window: cfg.node2vec.skipgram.window,
                negatives_per_positive: cfg.node2vec.skipgram.negatives_per_positive,
                ..cfg.node2vec.walk
            };
            let walks = biased_walks(net, &walk, seed)?;
            let (sg, report) = train_skipgram(&walks, net.node_count(), &cfg.node2vec.skipgram, seed)?;
            (sg.input, report.epoch_losses)
        }
        ModelKind::GraphSage => {
            let (m, curve) = train_graphsage(net, x, &cfg.graphsage, seed)?;
            (m.embed(&WalkGraph::new(net), x)?, curve)
        }
        ModelKind::Attri2Vec => {
            let (m, curve) = train_attri2vec(net, x, &cfg.attri2vec, seed)?;
            (m.embed(x)?, curve)
        }
    };
    if !vectors.is_finite() {
        return Err(Error::NonFinite("embedding"));
    }
    Ok(EmbedOutput {
        matrix: EmbeddingMatrix {
            node_ids: net.external_ids().to_vec(),
            model,
            features: set,
            vectors,
        },
        loss_curve,
    })
}
