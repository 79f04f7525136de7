//! Edge-split link prediction on embedding pairs and the with/without
//! social-feature experiment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centrality::{CentralityTable, EigenConfig};
use crate::embed::{embed, node_features, EmbedConfig, EmbeddingMatrix, FeatureScaler, FeatureSet, ModelKind};
use crate::error::{Error, Result};
use crate::graph::{Network, NodeId, Role};
use crate::ingest::{ConsultationRecord, PhysicianTable};
use crate::netbuild::{build_professional_network, build_referral_network, extract_interactions, ExtractConfig};
use crate::numkit::mlp::TrainConfig;
use crate::numkit::rng::{label, stream};
use crate::numkit::{bce_loss, Activation, AdamConfig, Dense, Mlp};

/// Two-level hold-out. Test positives leave the full network to form
/// `train_graph`; classifier positives then leave `train_graph` to form
/// `embedding_graph`, so the embedding has seen neither example set.
#[derive(Clone, Debug)]
pub struct EdgeSplit {
    /// The input network without the test positives.
    pub train_graph: Network,
    /// `train_graph` without the classifier training positives.
    pub embedding_graph: Network,
    pub train_positives: Vec<(NodeId, NodeId)>,
    pub train_negatives: Vec<(NodeId, NodeId)>,
    pub test_positives: Vec<(NodeId, NodeId)>,
    pub test_negatives: Vec<(NodeId, NodeId)>,
    pub test_fraction: f64,
    pub seed: u64,
}

fn canonical(net: &Network, u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if net.is_directed() || u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

fn linked(net: &Network, u: NodeId, v: NodeId) -> bool {
    net.has_edge(u, v) || net.has_edge(v, u)
}

impl EdgeSplit {
    /// Checks that no test positive reaches any training structure, that the
    /// classifier positives are absent from the embedding graph, and that
    /// every negative is a non-edge of `full`.
    pub fn audit(&self, full: &Network) -> Result<()> {
        let test: HashSet<(NodeId, NodeId)> = self.test_positives.iter().copied().collect();
        if let Some(&(u, v)) = self.train_positives.iter().find(|e| test.contains(e)) {
            return Err(Error::invalid(format!("test edge {u}->{v} among train positives")));
        }
        for g in [&self.train_graph, &self.embedding_graph] {
            if let Some(&(u, v)) = self.test_positives.iter().find(|&&(u, v)| linked(g, u, v)) {
                return Err(Error::invalid(format!("test edge {u}->{v} present in a training graph")));
            }
        }
        if let Some(&(u, v)) = self.train_positives.iter().find(|&&(u, v)| linked(&self.embedding_graph, u, v)) {
            return Err(Error::invalid(format!("classifier edge {u}->{v} present in the embedding graph")));
        }
        let negatives = self.train_negatives.iter().chain(&self.test_negatives);
        if let Some(&(u, v)) = negatives.clone().find(|&&(u, v)| linked(full, u, v)) {
            return Err(Error::invalid(format!("negative {u}->{v} is an edge")));
        }
        let train_neg: HashSet<_> = self.train_negatives.iter().collect();
        if self.test_negatives.iter().any(|e| train_neg.contains(e)) {
            return Err(Error::invalid("train and test negatives overlap"));
        }
        Ok(())
    }
}

/// Removes `count` uniformly chosen edges, skipping any whose removal would
/// leave an endpoint without edges.
fn hold_out(net: &Network, count: usize, seed: u64, tag: u64) -> Result<Vec<(NodeId, NodeId)>> {
    let mut edges: Vec<(NodeId, NodeId)> = net.edges().map(|(u, v, _)| (u, v)).collect();
    let mut degree = vec![0usize; net.node_count()];
    for &(u, v) in &edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    edges.shuffle(&mut stream(seed, &[label("split-edges"), tag]));
    let mut out = Vec::with_capacity(count);
    for &(u, v) in &edges {
        if out.len() == count {
            break;
        }
        if degree[u] > 1 && degree[v] > 1 {
            degree[u] -= 1;
            degree[v] -= 1;
            out.push((u, v));
        }
    }
    if out.len() < count {
        return Err(Error::invalid(format!(
            "only {} of {count} edges can be held out without isolating a node",
            out.len()
        )));
    }
    out.sort_unstable();
    Ok(out)
}

/// [`split_edges_with`] using `test_fraction` at both levels.
pub fn split_edges(net: &Network, test_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    split_edges_with(net, test_fraction, test_fraction, seed)
}

/// Holds out `round(test_fraction * |E|)` test edges, then
/// `round(classifier_fraction * |E_train|)` classifier edges, and samples
/// equally many distinct non-edges for each. With node roles, negatives are
/// PC -> SC pairs only.
pub fn split_edges_with(net: &Network, test_fraction: f64, classifier_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    for f in [test_fraction, classifier_fraction] {
        if !(f > 0.0 && f < 0.5) {
            return Err(Error::invalid(format!("split fraction {f} outside (0, 0.5)")));
        }
    }
    let n_edges = net.edge_count();
    let n_test = (test_fraction * n_edges as f64).round() as usize;
    let n_train = (classifier_fraction * (n_edges - n_test) as f64).round() as usize;
    if n_test == 0 || n_train == 0 {
        return Err(Error::invalid(format!("{n_edges} edges are too few to split")));
    }
    let test = hold_out(net, n_test, seed, 0)?;
    let train_graph = net.without_edges(&test);
    let train_positives = hold_out(&train_graph, n_train, seed, 1)?;
    let embedding_graph = train_graph.without_edges(&train_positives);

    let (sources, targets): (Vec<NodeId>, Vec<NodeId>) = match net.roles() {
        Some(roles) => (
            (0..net.node_count()).filter(|&u| roles[u] == Role::Pc).collect(),
            (0..net.node_count()).filter(|&u| roles[u] == Role::Sc).collect(),
        ),
        None => ((0..net.node_count()).collect(), (0..net.node_count()).collect()),
    };
    let candidate_pairs = if net.roles().is_some() {
        sources.len() * targets.len()
    } else if net.is_directed() {
        net.node_count() * net.node_count().saturating_sub(1)
    } else {
        net.node_count() * net.node_count().saturating_sub(1) / 2
    };
    let needed = n_test + n_train;
    if candidate_pairs < n_edges + needed {
        return Err(Error::invalid(format!(
            "{} candidate non-edges cannot supply {needed} negatives",
            candidate_pairs.saturating_sub(n_edges)
        )));
    }
    let mut rng = stream(seed, &[label("split-negatives")]);
    let mut taken: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(needed);
    let mut draw = |count: usize, rng: &mut crate::numkit::rng::Rng| -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let u = sources[rng.gen_range(0..sources.len())];
            let v = targets[rng.gen_range(0..targets.len())];
            if u == v || linked(net, u, v) {
                continue;
            }
            let e = canonical(net, u, v);
            if taken.insert(e) {
                out.push(e);
            }
        }
        out
    };
    let test_negatives = draw(n_test, &mut rng);
    let train_negatives = draw(n_train, &mut rng);
    Ok(EdgeSplit {
        train_graph,
        embedding_graph,
        train_positives,
        train_negatives,
        test_positives: test,
        test_negatives,
        test_fraction,
        seed,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairOperator {
    #[default]
    Hadamard,
    L1,
    L2,
    Average,
}

impl PairOperator {
    pub const ALL: [PairOperator; 4] = [
        PairOperator::Hadamard,
        PairOperator::L1,
        PairOperator::L2,
        PairOperator::Average,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PairOperator::Hadamard => "hadamard",
            PairOperator::L1 => "l1",
            PairOperator::L2 => "l2",
            PairOperator::Average => "average",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            PairOperator::Hadamard => a * b,
            PairOperator::L1 => (a - b).abs(),
            PairOperator::L2 => (a - b) * (a - b),
            PairOperator::Average => 0.5 * (a + b),
        }
    }
}

/// Operator rows for node-id pairs; missing ids are all reported together.
pub fn pair_features(emb: &EmbeddingMatrix, pairs: &[(&str, &str)], op: PairOperator) -> Result<Dense> {
    let index: HashMap<&str, usize> = emb.node_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut missing: Vec<&str> = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .filter(|id| !index.contains_key(id))
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::invalid(format!("not embedded: {}", missing.join(", "))));
    }
    let idx: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (index[a], index[b])).collect();
    pair_features_by_row(emb, &idx, op)
}

pub fn pair_features_by_row(emb: &EmbeddingMatrix, pairs: &[(usize, usize)], op: PairOperator) -> Result<Dense> {
    let d = emb.dim();
    let mut out = Dense::zeros(pairs.len(), d);
    for (r, &(a, b)) in pairs.iter().enumerate() {
        if a >= emb.len() || b >= emb.len() {
            return Err(Error::InvalidNode {
                id: a.max(b),
                count: emb.len(),
            });
        }
        let (x, y) = (emb.row(a), emb.row(b));
        for (j, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = op.apply(x[j], y[j]);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logistic,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            hidden: 20,
        }
    }
}

/// Column standardization fitted on the training rows, then the network.
#[derive(Clone, Debug)]
pub struct LinkClassifier {
    pub kind: ClassifierKind,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub mlp: Mlp,
}

impl LinkClassifier {
    fn standardize(&self, x: &Dense) -> Dense {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.scale[j];
            }
        }
        out
    }

    pub fn predict(&self, x: &Dense) -> Result<Vec<f64>> {
        self.mlp.predict(&self.standardize(x))
    }
}

pub fn train_link_classifier(
    x: &Dense,
    y: &[f64],
    kind: ClassifierKind,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<LinkClassifier> {
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
    let init_seed = crate::numkit::rng::derive_seed(seed, &[label("classifier-init")]);
    let mlp = match kind {
        ClassifierKind::Logistic => Mlp::new(&[d, 1], &[Activation::Sigmoid], 0.0, init_seed)?,
        ClassifierKind::Mlp => Mlp::new(&[d, cfg.hidden, 1], &[Activation::Relu, Activation::Sigmoid], 0.0, init_seed)?,
    };
    let mut clf = LinkClassifier { kind, mean, scale, mlp };
    let xs = clf.standardize(x);
    crate::numkit::mlp::train_bce(
        &mut clf.mlp,
        &xs,
        y,
        TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            adam: AdamConfig::with_lr(cfg.learning_rate),
            seed: crate::numkit::rng::derive_seed(seed, &[label("classifier-train")]),
        },
    )?;
    Ok(clf)
}

pub fn accuracy(p: &[f64], y: &[f64]) -> f64 {
    let correct = p.iter().zip(y).filter(|&(&p, &y)| (p >= 0.5) == (y > 0.5)).count();
    correct as f64 / p.len().max(1) as f64
}

/// Area under the ROC curve via the rank-sum statistic with tie-averaged ranks.
pub fn roc_auc(p: &[f64], y: &[f64]) -> Result<f64> {
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && p[order[j + 1]] == p[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += (i..=j).filter(|&k| y[order[k]] > 0.5).count() as f64 * avg;
        i = j + 1;
    }
    Ok((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

/// Classifier stage of one embedding model. With more than one candidate
/// operator, each run picks the one with the best accuracy on a validation
/// slice of the classifier training pairs, then refits on all of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProtocol {
    pub classifier: ClassifierKind,
    pub operators: Vec<PairOperator>,
}

impl ModelProtocol {
    pub fn new(classifier: ClassifierKind, operator: PairOperator) -> Self {
        ModelProtocol {
            classifier,
            operators: vec![operator],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub test_fraction: f64,
    pub classifier_fraction: f64,
    /// Share of each class held out from classifier fitting when a model
    /// has several candidate operators.
    pub validation_fraction: f64,
    pub classifier: ClassifierConfig,
    pub node2vec: ModelProtocol,
    pub graphsage: ModelProtocol,
    pub attri2vec: ModelProtocol,
    pub embed: EmbedConfig,
    pub eigen: EigenConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            test_fraction: 0.1,
            classifier_fraction: 0.3,
            validation_fraction: 0.25,
            classifier: ClassifierConfig::default(),
            node2vec: ModelProtocol::new(ClassifierKind::Logistic, PairOperator::Hadamard),
            graphsage: ModelProtocol::new(ClassifierKind::Mlp, PairOperator::Hadamard),
            attri2vec: ModelProtocol::new(ClassifierKind::Mlp, PairOperator::L1),
            embed: EmbedConfig::default(),
            eigen: EigenConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn protocol_for(&self, model: ModelKind) -> &ModelProtocol {
        match model {
            ModelKind::Node2Vec => &self.node2vec,
            ModelKind::GraphSage => &self.graphsage,
            ModelKind::Attri2Vec => &self.attri2vec,
        }
    }
}

/// Networks and centralities shared by every run of an experiment.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub referral: Network,
    pub professional: Network,
    pub profiles: PhysicianTable,
    pub centrality: CentralityTable,
    pub end_year: i32,
}

impl ExperimentData {
    pub fn prepare(
        consultations: &[ConsultationRecord],
        profiles: PhysicianTable,
        extract: &ExtractConfig,
        eigen: EigenConfig,
        end_year: i32,
    ) -> Result<Self> {
        let interactions = extract_interactions(consultations, &profiles, *extract);
        let referral = build_referral_network(&interactions)?;
        let professional = build_professional_network(&profiles)?;
        let centrality = CentralityTable::compute(&professional, eigen)?;
        Ok(ExperimentData {
            referral,
            professional,
            profiles,
            centrality,
            end_year,
        })
    }

    /// Scaled node features of the referral network for `set`.
    pub fn features(&self, set: FeatureSet) -> Result<Dense> {
        let f = node_features(&self.referral, &self.profiles, Some(&self.centrality), set, self.end_year)?;
        Ok(FeatureScaler::fit(&f, None).transform(&f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkExperimentReport {
    pub model: ModelKind,
    pub features: FeatureSet,
    pub operator: PairOperator,
    pub loss: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub source_id: String,
    pub target_id: String,
    pub label: f64,
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub report: LinkExperimentReport,
    pub predictions: Vec<Prediction>,
}

fn labelled(pos: &[(NodeId, NodeId)], neg: &[(NodeId, NodeId)]) -> (Vec<(NodeId, NodeId)>, Vec<f64>) {
    let pairs: Vec<_> = pos.iter().chain(neg).copied().collect();
    let y = pos.iter().map(|_| 1.0).chain(neg.iter().map(|_| 0.0)).collect();
    (pairs, y)
}

/// Stratified validation pick among `protocol.operators`; ties keep the earlier candidate.
fn select_operator(
    emb: &EmbeddingMatrix,
    pairs: &[(NodeId, NodeId)],
    y: &[f64],
    protocol: &ModelProtocol,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PairOperator> {
    let kind = protocol.classifier;
    match protocol.operators.as_slice() {
        [] => return Err(Error::invalid("no pair operator configured")),
        [op] => return Ok(*op),
        _ => {}
    }
    if !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction {} outside (0, 1)",
            cfg.validation_fraction
        )));
    }
    let mut rng = stream(seed, &[label("operator-validation")]);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for class in [1.0, 0.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = ((idx.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, idx.len() - 1);
        val.extend_from_slice(&idx[..cut]);
        fit.extend_from_slice(&idx[cut..]);
    }
    let pick = |rows: &[usize]| -> (Vec<(NodeId, NodeId)>, Vec<f64>) {
        (rows.iter().map(|&i| pairs[i]).collect(), rows.iter().map(|&i| y[i]).collect())
    };
    let (fit_pairs, fit_y) = pick(&fit);
    let (val_pairs, val_y) = pick(&val);
    let mut best = (f64::NEG_INFINITY, protocol.operators[0]);
    for &op in &protocol.operators {
        let clf = train_link_classifier(
            &pair_features_by_row(emb, &fit_pairs, op)?,
            &fit_y,
            kind,
            &cfg.classifier,
            seed,
        )?;
        let acc = accuracy(&clf.predict(&pair_features_by_row(emb, &val_pairs, op)?)?, &val_y);
        if acc > best.0 {
            best = (acc, op);
        }
    }
    Ok(best.1)
}

/// Classifier stage for an embedding trained on `split.embedding_graph`.
pub fn evaluate_embedding(
    data: &ExperimentData,
    split: &EdgeSplit,
    emb: &EmbeddingMatrix,
    protocol: &ModelProtocol,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<SeedRun> {
    let (train_pairs, y_train) = labelled(&split.train_positives, &split.train_negatives);
    let (test_pairs, y_test) = labelled(&split.test_positives, &split.test_negatives);
    let operator = select_operator(emb, &train_pairs, &y_train, protocol, cfg, seed)?;
    let x_train = pair_features_by_row(emb, &train_pairs, operator)?;
    let x_test = pair_features_by_row(emb, &test_pairs, operator)?;
    let clf = train_link_classifier(&x_train, &y_train, protocol.classifier, &cfg.classifier, seed)?;
    let p = clf.predict(&x_test)?;
    let (loss, _) = bce_loss(&p, &y_test)?;
    let ids = data.referral.external_ids();
    Ok(SeedRun {
        report: LinkExperimentReport {
            model: emb.model,
            features: emb.features,
            operator,
            loss,
            accuracy: accuracy(&p, &y_test),
            auc: roc_auc(&p, &y_test)?,
            seed,
            config_digest: String::new(),
        },
        predictions: test_pairs
            .iter()
            .zip(&y_test)
            .zip(&p)
            .map(|((&(u, v), &label), &probability)| Prediction {
                source_id: ids[u].clone(),
                target_id: ids[v].clone(),
                label,
                probability,
            })
            .collect(),
    })
}

/// Every requested `(model, feature set)` for one seed, sharing the split and,
/// for node2vec, the structural embedding. Node2vec rows get the scaled
/// feature set appended to the embedding.
pub fn run_seed(
    data: &ExperimentData,
    models: &[ModelKind],
    sets: &[FeatureSet],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<SeedRun>> {
    let split = split_edges_with(&data.referral, cfg.test_fraction, cfg.classifier_fraction, seed)?;
    split.audit(&data.referral)?;
    let features: BTreeMap<FeatureSet, Dense> = sets
        .iter()
        .map(|&s| Ok((s, data.features(s)?)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &model in models {
        let embed_seed = crate::numkit::rng::derive_seed(seed, &[label("embed"), model as u64]);
        let structural = if model == ModelKind::Node2Vec {
            let x = &features[&sets[0]];
            Some(embed(&split.embedding_graph, x, model, sets[0], &cfg.embed, embed_seed)?.matrix)
        } else {
            None
        };
        for &set in sets {
            let x = &features[&set];
            let emb = match &structural {
                Some(m) => EmbeddingMatrix {
                    features: set,
                    ..m.concat(x)?
                },
                None => embed(&split.embedding_graph, x, model, set, &cfg.embed, embed_seed)?.matrix,
            };
            let clf_seed = crate::numkit::rng::derive_seed(seed, &[label("classifier"), model as u64]);
            out.push(evaluate_embedding(data, &split, &emb, cfg.protocol_for(model), cfg, clf_seed)?);
        }
    }
    Ok(out)
}

/// All seeds in parallel; results ordered by (seed order, model, feature set).
pub fn run_experiment(
    data: &ExperimentData,
    models: &[ModelKind],
    sets: &[FeatureSet],
    seeds: &[u64],
    cfg: &ExperimentConfig,
    config_digest: &str,
) -> Result<Vec<SeedRun>> {
    let runs: Vec<Vec<SeedRun>> = seeds
        .par_iter()
        .map(|&s| run_seed(data, models, sets, cfg, s))
        .collect::<Result<_>>()?;
    Ok(runs
        .into_iter()
        .flatten()
        .map(|mut r| {
            r.report.config_digest = config_digest.to_string();
            r
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub model: ModelKind,
    pub features: FeatureSet,
    pub runs: usize,
    pub mean_loss: f64,
    pub mean_accuracy: f64,
    pub sd_accuracy: f64,
    pub mean_auc: f64,
    pub sd_auc: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

pub fn summarize(reports: &[LinkExperimentReport]) -> Vec<MetricSummary> {
    let mut groups: BTreeMap<(ModelKind, FeatureSet), Vec<&LinkExperimentReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.model, r.features)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, features), rs)| {
            let acc: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let auc: Vec<f64> = rs.iter().map(|r| r.auc).collect();
            let (mean_accuracy, sd_accuracy) = mean_sd(&acc);
            let (mean_auc, sd_auc) = mean_sd(&auc);
            MetricSummary {
                model,
                features,
                runs: rs.len(),
                mean_loss: rs.iter().map(|r| r.loss).sum::<f64>() / rs.len() as f64,
                mean_accuracy,
                sd_accuracy,
                mean_auc,
                sd_auc,
            }
        })
        .collect()
}

/// `model,features,operator,loss,accuracy,auc,seed`, one row per run.
pub fn write_report_csv<W: Write>(reports: &[LinkExperimentReport], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["model", "features", "operator", "loss", "accuracy", "auc", "seed"])?;
    for r in reports {
        wtr.write_record([
            r.model.as_str().to_string(),
            r.features.as_str().to_string(),
            r.operator.as_str().to_string(),
            format!("{:.6}", r.loss),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.auc),
            r.seed.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<report csv>", e))?;
    Ok(())
}

pub fn write_predictions_csv<W: Write>(runs: &[SeedRun], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["model", "features", "seed", "source_id", "target_id", "label", "probability"])?;
    for run in runs {
        for p in &run.predictions {
            wtr.write_record([
                run.report.model.as_str().to_string(),
                run.report.features.as_str().to_string(),
                run.report.seed.to_string(),
                p.source_id.clone(),
                p.target_id.clone(),
                format!("{}", p.label as u8),
                format!("{:.9}", p.probability),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<predictions csv>", e))?;
    Ok(())
}

pub fn summary_text(summaries: &[MetricSummary]) -> String {
    let mut s = String::from("model      features        runs  accuracy (sd)      auc (sd)           loss\n");
    for m in summaries {
        s.push_str(&format!(
            "{:<10} {:<15} {:>4}  {:.4} ({:.4})    {:.4} ({:.4})    {:.4}\n",
            m.model.as_str(),
            m.features.as_str(),
            m.runs,
            m.mean_accuracy,
            m.sd_accuracy,
            m.mean_auc,
            m.sd_auc,
            m.mean_loss
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bipartite(n_pc: usize, n_sc: usize, edges: &[(usize, usize)]) -> Network {
        let roles = (0..n_pc).map(|_| Role::Pc).chain((0..n_sc).map(|_| Role::Sc)).collect();
        let mut net = Network::new(n_pc + n_sc, true).with_roles(roles).unwrap();
        for &(u, v) in edges {
            net.add_edge(u, n_pc + v, 1.0).unwrap();
        }
        net
    }

    #[test]
    fn hundred_edges_split_ten_ten_ninety() {
        let edges: Vec<_> = (0..20).flat_map(|u| (0..5).map(move |k| (u, (u + k) % 20))).collect();
        let net = bipartite(20, 20, &edges);
        assert_eq!(net.edge_count(), 100);
        let s = split_edges(&net, 0.1, 1).unwrap();
        assert_eq!(s.test_positives.len(), 10);
        assert_eq!(s.test_negatives.len(), 10);
        assert_eq!(s.train_graph.edge_count(), 90);
        s.audit(&net).unwrap();
        let again = split_edges(&net, 0.1, 1).unwrap();
        assert_eq!(s.test_positives, again.test_positives);
        let other = split_edges(&net, 0.1, 2).unwrap();
        assert_ne!(s.test_positives, other.test_positives);
    }

    #[test]
    fn operators_match_definitions() {
        let e = EmbeddingMatrix {
            node_ids: vec!["a".into(), "b".into()],
            model: ModelKind::Node2Vec,
            features: FeatureSet::WithoutSocial,
            vectors: Dense::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
        };
        let h = pair_features(&e, &[("a", "b")], PairOperator::Hadamard).unwrap();
        assert_eq!(h.row(0), &[3.0, 8.0]);
        let l1 = pair_features(&e, &[("a", "b")], PairOperator::L1).unwrap();
        assert_eq!(l1.row(0), &[2.0, 2.0]);
        let avg = pair_features(&e, &[("a", "a")], PairOperator::Average).unwrap();
        assert_eq!(avg.row(0), &[1.0, 2.0]);
        let err = pair_features(&e, &[("a", "zz"), ("yy", "b")], PairOperator::L2).unwrap_err();
        assert!(err.to_string().contains("yy, zz"));
    }

    #[test]
    fn auc_handles_ties_and_order() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.1], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
        assert!(roc_auc(&[0.5], &[1.0]).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let x = Dense::zeros(3, 2);
        let r = train_link_classifier(&x, &[1.0, 1.0, 1.0], ClassifierKind::Logistic, &ClassifierConfig::default(), 1);
        assert!(matches!(r, Err(Error::DegenerateLabels)));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let net = bipartite(2, 2, &[(0, 0), (1, 1)]);
        assert!(split_edges(&net, 0.5, 1).is_err());
        assert!(split_edges(&net, 0.0, 1).is_err());
    }
}
