//! Pair-level referral classifier on physician attributes and exact
//! interventional Shapley attribution of its predictions.

use std::collections::HashSet;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{node_features, FeatureSet};
use crate::error::{Error, Result};
use crate::graph::{NodeId, Role};
use crate::linkpred::{roc_auc, ExperimentData};
use crate::numkit::mlp::{train_bce, TrainConfig};
use crate::numkit::rng::{derive_seed, label, stream};
use crate::numkit::{Activation, AdamConfig, Dense, Mlp};

/// Largest feature count accepted by [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 16;

pub const BASE_FEATURES: [&str; 10] = [
    "age_sc", "gender_sc", "degree_sc", "eigen_sc", "betw_sc", "age_tg", "gender_tg", "degree_tg", "eigen_tg", "betw_tg",
];

pub const ENGINEERED_FEATURES: [&str; 8] = [
    "delta_age", "g", "degree_sc", "eigen_sc", "betw_sc", "degree_tg", "eigen_tg", "betw_tg",
];

/// Gender-pair code for an unknown gender on either side.
pub const G_UNKNOWN: f64 = 4.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFeatureMode {
    #[default]
    Base,
    Engineered,
}

impl PairFeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PairFeatureMode::Base => "base",
            PairFeatureMode::Engineered => "engineered",
        }
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            PairFeatureMode::Base => &BASE_FEATURES,
            PairFeatureMode::Engineered => &ENGINEERED_FEATURES,
        }
    }
}

impl FromStr for PairFeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(PairFeatureMode::Base),
            "engineered" => Ok(PairFeatureMode::Engineered),
            other => Err(Error::invalid(format!("unknown feature mode `{other}` (base, engineered)"))),
        }
    }
}

impl std::fmt::Display for PairFeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One physician's inputs to a pair row. `gender` uses the F = 0, M = 1,
/// unknown = 0.5 coding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Endpoint {
    pub age: f64,
    pub gender: f64,
    pub degree: f64,
    pub eigenvector: f64,
    pub betweenness: f64,
}

/// F,F → 0; M,M → 1; M,F → 2; F,M → 3 for (PC, SC); anything else → 4.
pub fn gender_pair_code(pc: f64, sc: f64) -> f64 {
    match (pc, sc) {
        (a, b) if a == 0.0 && b == 0.0 => 0.0,
        (a, b) if a == 1.0 && b == 1.0 => 1.0,
        (a, b) if a == 1.0 && b == 0.0 => 2.0,
        (a, b) if a == 0.0 && b == 1.0 => 3.0,
        _ => G_UNKNOWN,
    }
}

pub fn base_features(pc: &Endpoint, sc: &Endpoint) -> Vec<f64> {
    vec![
        pc.age,
        pc.gender,
        pc.degree,
        pc.eigenvector,
        pc.betweenness,
        sc.age,
        sc.gender,
        sc.degree,
        sc.eigenvector,
        sc.betweenness,
    ]
}

pub fn engineered_features(pc: &Endpoint, sc: &Endpoint) -> Vec<f64> {
    vec![
        (pc.age - sc.age).abs(),
        gender_pair_code(pc.gender, sc.gender),
        pc.degree,
        pc.eigenvector,
        pc.betweenness,
        sc.degree,
        sc.eigenvector,
        sc.betweenness,
    ]
}

pub fn pair_row(mode: PairFeatureMode, pc: &Endpoint, sc: &Endpoint) -> Vec<f64> {
    match mode {
        PairFeatureMode::Base => base_features(pc, sc),
        PairFeatureMode::Engineered => engineered_features(pc, sc),
    }
}

/// Labelled pair rows: every referral edge plus as many PC–SC non-edges.
#[derive(Clone, Debug)]
pub struct PairDataset {
    pub mode: PairFeatureMode,
    pub names: Vec<String>,
    pub pairs: Vec<(String, String)>,
    pub rows: Dense,
    pub labels: Vec<f64>,
}

/// Engineered datasets drop pairs with an unknown gender code.
pub fn pair_dataset(data: &ExperimentData, mode: PairFeatureMode, seed: u64) -> Result<PairDataset> {
    let net = &data.referral;
    let f = node_features(
        net,
        &data.profiles,
        Some(&data.centrality),
        FeatureSet::WithSocial,
        data.end_year,
    )?;
    let endpoint = |u: NodeId| {
        let r = f.data.row(u);
        Endpoint {
            age: r[0],
            gender: r[1],
            degree: r[2],
            eigenvector: r[3],
            betweenness: r[4],
        }
    };
    let mut positives: Vec<(NodeId, NodeId)> = net.edges().map(|(u, v, _)| (u, v)).collect();
    positives.sort_unstable();
    let edges: HashSet<(NodeId, NodeId)> = positives.iter().copied().collect();
    let pcs: Vec<NodeId> = (0..net.node_count()).filter(|&u| net.role(u) == Role::Pc).collect();
    let scs: Vec<NodeId> = (0..net.node_count()).filter(|&u| net.role(u) == Role::Sc).collect();
    let capacity = pcs.len() * scs.len() - edges.len();
    if positives.is_empty() || capacity < positives.len() {
        return Err(Error::invalid(format!(
            "{} referral edges leave {capacity} PC-SC non-edges; need at least as many",
            positives.len()
        )));
    }
    let mut rng = stream(seed, &[label("explain-negatives")]);
    let mut seen = HashSet::with_capacity(positives.len());
    let mut negatives = Vec::with_capacity(positives.len());
    while negatives.len() < positives.len() {
        let pair = (pcs[rng.gen_range(0..pcs.len())], scs[rng.gen_range(0..scs.len())]);
        if !edges.contains(&pair) && seen.insert(pair) {
            negatives.push(pair);
        }
    }
    let ids = net.external_ids();
    let (mut pairs, mut rows, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (list, y) in [(&positives, 1.0), (&negatives, 0.0)] {
        for &(u, v) in list {
            let row = pair_row(mode, &endpoint(u), &endpoint(v));
            if mode == PairFeatureMode::Engineered && row[1] == G_UNKNOWN {
                continue;
            }
            pairs.push((ids[u].clone(), ids[v].clone()));
            rows.push(row);
            labels.push(y);
        }
    }
    Ok(PairDataset {
        mode,
        names: mode.names().iter().map(|s| s.to_string()).collect(),
        pairs,
        rows: Dense::from_rows(&rows)?,
        labels,
    })
}

/// Anything that maps one feature row to a scalar.
pub trait RowModel: Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> RowModel for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for PairClassifierConfig {
    fn default() -> Self {
        PairClassifierConfig {
            hidden: vec![5, 5],
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

/// Column standardization followed by a relu MLP with a sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct PairClassifier {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub mlp: Mlp,
}

impl PairClassifier {
    pub fn predict(&self, x: &Dense) -> Vec<f64> {
        (0..x.rows()).map(|i| self.eval(x.row(i))).collect()
    }
}

impl RowModel for PairClassifier {
    fn eval(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) * s)
            .collect();
        self.mlp.predict_row(&z)[0]
    }
}

pub fn train_pair_classifier(x: &Dense, y: &[f64], cfg: &PairClassifierConfig, seed: u64) -> Result<PairClassifier> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows vs {} labels", x.rows(), y.len())));
    }
    let positives = y.iter().filter(|&&v| v > 0.5).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels);
    }
    let (n, d) = x.shape();
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = (0..n).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 1e-24 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut sizes = vec![d];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut acts = vec![Activation::Relu; cfg.hidden.len()];
    acts.push(Activation::Sigmoid);
    let mlp = Mlp::new(&sizes, &acts, 0.0, derive_seed(seed, &[label("pair-init")]))?;
    let mut clf = PairClassifier { mean, scale, mlp };
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            x.row(i)
                .iter()
                .zip(clf.mean.iter().zip(&clf.scale))
                .map(|(v, (m, s))| (v - m) * s)
                .collect()
        })
        .collect();
    train_bce(
        &mut clf.mlp,
        &Dense::from_rows(&rows)?,
        y,
        TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            adam: AdamConfig::with_lr(cfg.learning_rate),
            seed: derive_seed(seed, &[label("pair-train")]),
        },
    )?;
    Ok(clf)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyAttribution {
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub prediction: f64,
}

impl ShapleyAttribution {
    /// `|Σφ − (f(x) − base)|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() - (self.prediction - self.base_value)).abs()
    }
}

/// Exact Shapley values under the interventional value function
/// `v(S) = mean_b f(x_S, b_{N∖S})`, enumerating all `2ⁿ` coalitions.
pub fn exact_shapley<M: RowModel + ?Sized>(model: &M, x: &[f64], background: &Dense) -> Result<ShapleyAttribution> {
    let n = x.len();
    if n > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            got: n,
            max: MAX_EXACT_FEATURES,
        });
    }
    if background.rows() == 0 {
        return Err(Error::invalid("empty background sample"));
    }
    if background.cols() != n {
        return Err(Error::Shape(format!("row has {n} features, background has {}", background.cols())));
    }
    let mut z = vec![0.0; n];
    let value: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            let mut total = 0.0;
            for b in 0..background.rows() {
                let bg = background.row(b);
                for j in 0..n {
                    z[j] = if mask >> j & 1 == 1 { x[j] } else { bg[j] };
                }
                total += model.eval(&z);
            }
            total / background.rows() as f64
        })
        .collect();
    // |S|!(n-|S|-1)!/n! for each coalition size
    let weight: Vec<f64> = (0..n)
        .map(|s| {
            let mut w = 1.0 / n as f64;
            for k in 1..=s {
                w *= k as f64 / (n - k) as f64;
            }
            w
        })
        .collect();
    let phi = (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << n)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (value[m | bit] - value[m]))
                .sum()
        })
        .collect();
    Ok(ShapleyAttribution {
        phi,
        base_value: value[0],
        prediction: value[(1usize << n) - 1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mean_abs_phi: f64,
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct AttributionReport {
    pub names: Vec<String>,
    pub attributions: Vec<ShapleyAttribution>,
    /// Descending mean |φ|; ties keep column order.
    pub ranking: Vec<RankedFeature>,
}

impl AttributionReport {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranking.iter().find(|r| r.feature == feature).map(|r| r.rank)
    }

    /// One row per explained sample, one column per feature, then base and prediction.
    pub fn write_values_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = self.names.clone();
        header.extend(["base_value".to_string(), "prediction".to_string()]);
        wtr.write_record(&header)?;
        for a in &self.attributions {
            let mut rec: Vec<String> = a.phi.iter().map(|v| format!("{v:.12e}")).collect();
            rec.push(format!("{:.12e}", a.base_value));
            rec.push(format!("{:.12e}", a.prediction));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<shap values>", e))?;
        Ok(())
    }

    pub fn write_ranking_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["feature", "mean_abs_phi", "rank"])?;
        for r in &self.ranking {
            wtr.write_record([r.feature.clone(), format!("{:.12e}", r.mean_abs_phi), r.rank.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<shap ranking>", e))?;
        Ok(())
    }
}

/// Exact attributions for every row of `rows` (in parallel) and the mean-|φ|
/// ranking, truncated to `top_k` entries when given.
pub fn attribution_report<M: RowModel + ?Sized>(
    model: &M,
    names: &[String],
    rows: &Dense,
    background: &Dense,
    top_k: Option<usize>,
) -> Result<AttributionReport> {
    if names.len() != rows.cols() {
        return Err(Error::Shape(format!("{} names for {} columns", names.len(), rows.cols())));
    }
    let attributions = (0..rows.rows())
        .into_par_iter()
        .map(|i| exact_shapley(model, rows.row(i), background))
        .collect::<Result<Vec<_>>>()?;
    let count = attributions.len().max(1) as f64;
    let mut ranking: Vec<RankedFeature> = names
        .iter()
        .enumerate()
        .map(|(j, name)| RankedFeature {
            feature: name.clone(),
            mean_abs_phi: attributions.iter().map(|a| a.phi[j].abs()).sum::<f64>() / count,
            rank: 0,
        })
        .collect();
    ranking.sort_by(|a, b| b.mean_abs_phi.total_cmp(&a.mean_abs_phi));
    for (k, r) in ranking.iter_mut().enumerate() {
        r.rank = k + 1;
    }
    if let Some(k) = top_k {
        ranking.truncate(k);
    }
    Ok(AttributionReport {
        names: names.to_vec(),
        attributions,
        ranking,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub mode: PairFeatureMode,
    pub classifier: PairClassifierConfig,
    pub test_fraction: f64,
    pub background_size: usize,
    /// Held-out rows to attribute; all of them when larger than the hold-out.
    pub explain_rows: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            mode: PairFeatureMode::Base,
            classifier: PairClassifierConfig::default(),
            test_fraction: 0.2,
            background_size: 100,
            explain_rows: 300,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExplainOutput {
    pub dataset: PairDataset,
    pub classifier: PairClassifier,
    pub test_auc: f64,
    /// Dataset indices of the attributed rows, in report order.
    pub explained: Vec<usize>,
    pub report: AttributionReport,
}

/// Pair dataset → stratified train/test split → classifier → attributions of
/// held-out rows against a background drawn from the training rows.
pub fn run_explain(data: &ExperimentData, cfg: &ExplainConfig, seed: u64) -> Result<ExplainOutput> {
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {} outside (0, 1)", cfg.test_fraction)));
    }
    if cfg.background_size == 0 || cfg.explain_rows == 0 {
        return Err(Error::invalid("background size and explained rows must be positive"));
    }
    let dataset = pair_dataset(data, cfg.mode, derive_seed(seed, &[label("explain-data")]))?;
    let mut rng = stream(seed, &[label("explain-split")]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [1.0, 0.0] {
        let mut idx: Vec<usize> = (0..dataset.labels.len()).filter(|&i| dataset.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = ((idx.len() as f64 * cfg.test_fraction).round() as usize).clamp(1, idx.len().saturating_sub(1));
        test.extend_from_slice(&idx[..cut]);
        train.extend_from_slice(&idx[cut..]);
    }
    let y = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| dataset.labels[i]).collect() };
    let classifier = train_pair_classifier(
        &dataset.rows.select_rows(&train),
        &y(&train),
        &cfg.classifier,
        derive_seed(seed, &[label("explain-classifier")]),
    )?;
    let test_auc = roc_auc(&classifier.predict(&dataset.rows.select_rows(&test)), &y(&test))?;
    let mut background = train.clone();
    background.shuffle(&mut rng);
    background.truncate(cfg.background_size);
    background.sort_unstable();
    let mut explained = test;
    explained.shuffle(&mut rng);
    explained.truncate(cfg.explain_rows);
    explained.sort_unstable();
    let report = attribution_report(
        &classifier,
        &dataset.names,
        &dataset.rows.select_rows(&explained),
        &dataset.rows.select_rows(&background),
        None,
    )?;
    Ok(ExplainOutput {
        dataset,
        classifier,
        test_auc,
        explained,
        report,
    })
}
