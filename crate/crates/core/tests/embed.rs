mod common;

use rand::Rng;
use refnet::embed::sage::{sample_tree, SagePair};
use refnet::embed::skipgram::SgnsBatch;
use refnet::embed::{
    biased_walks, embed, train_attri2vec, train_graphsage, train_skipgram, Attri2Vec, Attri2VecConfig,
    EmbedConfig, FeatureSet, ModelKind, SageConfig, SageModel, SkipGram, SkipGramConfig, WalkConfig, WalkGraph,
};
use refnet::numkit::gradcheck::relative_error;
use refnet::numkit::rng::stream;
use refnet::numkit::{sigmoid, Dense};
use refnet::Network;

fn graph(n: usize, edges: &[(usize, usize)]) -> Network {
    let mut g = Network::new(n, false);
    for &(u, v) in edges {
        g.add_edge(u, v, 1.0).unwrap();
    }
    g
}

/// Two disjoint 5-cliques: nodes 0..5 and 5..10.
fn two_cliques() -> Network {
    let mut edges = Vec::new();
    for base in [0, 5] {
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((base + i, base + j));
            }
        }
    }
    graph(10, &edges)
}

fn six_node() -> Network {
    graph(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 4)])
}

fn random_dense(rows: usize, cols: usize, seed: u64) -> Dense {
    let mut rng = stream(seed, &[]);
    Dense::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn separation(cos: impl Fn(usize, usize) -> f64) -> (f64, f64) {
    let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0, 0);
    for a in 0..10 {
        for b in a + 1..10 {
            if (a < 5) == (b < 5) {
                intra += cos(a, b);
                ni += 1;
            } else {
                inter += cos(a, b);
                nx += 1;
            }
        }
    }
    (intra / ni as f64, inter / nx as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

#[test]
fn unit_first_step_matches_edge_weights() {
    // 0 is the hub; weights 1, 2, 3, 4 to nodes 1..=4, and 1-2 adjacent.
    let mut net = Network::new(5, false);
    for (v, w) in [(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)] {
        net.add_edge(0, v, w).unwrap();
    }
    net.add_edge(1, 2, 1.0).unwrap();
    let g = WalkGraph::new(&net);
    assert_eq!(g.second_order_weights(1, 0, 1.0, 1.0), [1.0, 2.0, 3.0, 4.0]);

    let mut rng = stream(17, &[]);
    let mut counts = [0.0f64; 5];
    let trials = 100_000;
    for _ in 0..trials {
        let w = g.walk(1, 3, 1.0, 1.0, &mut rng);
        if w[1] == 0 {
            counts[w[2]] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let expected: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|w| total * w / 10.0).collect();
    let p = common::chi_square_p(&counts[1..], &expected);
    assert!(p > 0.01, "chi-square p = {p}");
}

#[test]
fn walk_edge_cases() {
    let net = graph(3, &[(0, 1), (1, 2)]);
    let g = WalkGraph::new(&net);
    let w = g.second_order_weights(0, 1, 1.0, 1e6);
    let back = w[net.adj(1).iter().position(|e| e.0 == 0).unwrap()];
    let out = w[net.adj(1).iter().position(|e| e.0 == 2).unwrap()];
    assert!(back / (back + out) > 1.0 - 1e-5);

    let lonely = graph(2, &[]);
    let cfg = WalkConfig {
        walks_per_node: 2,
        walk_length: 10,
        window: 2,
        ..WalkConfig::default()
    };
    for walk in biased_walks(&lonely, &cfg, 1).unwrap() {
        assert_eq!(walk.len(), 1);
    }
}

#[test]
fn sgns_zero_vectors_cost_log_two_per_term() {
    let sg = SkipGram::zeros(4, 3);
    let batch = SgnsBatch {
        pairs: vec![(0, 1)],
        negatives: vec![2, 3, 2],
    };
    assert!((sg.batch_loss(&batch) - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn sgns_gradient_matches_finite_differences() {
    let n = 6;
    let mut sg = SkipGram::init(n, 4, 3);
    sg.output = random_dense(n, 4, 4);
    sg.input = random_dense(n, 4, 5);
    let batch = SgnsBatch {
        pairs: vec![(0, 1), (2, 3), (4, 5), (1, 0)],
        negatives: vec![3, 4, 5, 0, 1, 1, 2, 3],
    };
    let (_, g) = sg.batch_grad(&batch);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for table in 0..2 {
        for i in 0..n * 4 {
            let mut probe = sg.clone();
            let slot = |p: &mut SkipGram| -> *mut f64 {
                if table == 0 {
                    &mut p.input.as_mut_slice()[i]
                } else {
                    &mut p.output.as_mut_slice()[i]
                }
            };
            let orig = unsafe { *slot(&mut probe) };
            unsafe { *slot(&mut probe) = orig + h };
            let up = probe.batch_loss(&batch);
            unsafe { *slot(&mut probe) = orig - h };
            let down = probe.batch_loss(&batch);
            let numeric = (up - down) / (2.0 * h);
            let analytic = if table == 0 { g.input.as_slice()[i] } else { g.output.as_slice()[i] };
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

fn sage_pairs(net: &Network, seed: u64) -> Vec<SagePair> {
    let g = WalkGraph::new(net);
    let mut rng = stream(seed, &[]);
    [(0, 1, 1.0), (2, 5, 0.0), (3, 4, 1.0), (1, 5, 0.0), (2, 2, 1.0)]
        .into_iter()
        .map(|(u, v, y)| (sample_tree(&g, u, [3, 2], &mut rng), sample_tree(&g, v, [3, 2], &mut rng), y))
        .collect()
}

#[test]
fn aggregator_gradient_matches_finite_differences() {
    let net = six_node();
    let x = random_dense(6, 3, 8);
    let model = SageModel::new(3, [4, 3], 21);
    let pairs = sage_pairs(&net, 2);
    let (_, grads) = model.pair_loss_grad(&x, &pairs);
    let analytic: Vec<f64> = grads.blocks().concat();
    let h = 1e-6;
    let mut probe = model.clone();
    let mut flat = 0;
    let mut worst: f64 = 0.0;
    for block in 0..4 {
        let len = probe.blocks_mut()[block].len();
        for j in 0..len {
            let orig = probe.blocks_mut()[block][j];
            probe.blocks_mut()[block][j] = orig + h;
            let up = probe.pair_loss_grad(&x, &pairs).0;
            probe.blocks_mut()[block][j] = orig - h;
            let down = probe.pair_loss_grad(&x, &pairs).0;
            probe.blocks_mut()[block][j] = orig;
            worst = worst.max(relative_error(analytic[flat], (up - down) / (2.0 * h)));
            flat += 1;
        }
    }
    assert_eq!(flat, analytic.len());
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn attri2vec_gradient_matches_finite_differences() {
    let x = random_dense(6, 3, 9);
    let cfg = Attri2VecConfig {
        hidden_dim: 4,
        ..Attri2VecConfig::default()
    };
    let model = Attri2Vec::init(6, 3, &cfg, 4);
    let pairs = [(0, 1, 1.0), (2, 5, 0.0), (3, 4, 1.0), (1, 1, 0.0)];
    let (_, gw, gc) = model.pair_loss_grad(&x, &pairs);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..model.weights.as_slice().len() {
        let mut p = model.clone();
        p.weights.as_mut_slice()[i] += h;
        let up = p.pair_loss_grad(&x, &pairs).0;
        p.weights.as_mut_slice()[i] -= 2.0 * h;
        let down = p.pair_loss_grad(&x, &pairs).0;
        worst = worst.max(relative_error(gw.as_slice()[i], (up - down) / (2.0 * h)));
    }
    for i in 0..model.context.as_slice().len() {
        let mut p = model.clone();
        p.context.as_mut_slice()[i] += h;
        let up = p.pair_loss_grad(&x, &pairs).0;
        p.context.as_mut_slice()[i] -= 2.0 * h;
        let down = p.pair_loss_grad(&x, &pairs).0;
        worst = worst.max(relative_error(gc.as_slice()[i], (up - down) / (2.0 * h)));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn skipgram_separates_disjoint_cliques() {
    let net = two_cliques();
    let walk = WalkConfig {
        walks_per_node: 20,
        walk_length: 20,
        window: 3,
        ..WalkConfig::default()
    };
    let walks = biased_walks(&net, &walk, 5).unwrap();
    let cfg = SkipGramConfig {
        dim: 8,
        epochs: 5,
        batch_size: 64,
        window: 3,
        ..SkipGramConfig::default()
    };
    let (sg, _) = train_skipgram(&walks, 10, &cfg, 5).unwrap();
    let (intra, inter) = separation(|a, b| cosine(sg.input.row(a), sg.input.row(b)));
    assert!(intra > inter, "intra {intra} inter {inter}");
}

#[test]
fn skipgram_loss_decreases_on_connected_graph() {
    let edges: Vec<(usize, usize)> = (0..12).map(|i| (i, (i + 1) % 12)).chain([(0, 6), (3, 9)]).collect();
    let net = graph(12, &edges);
    let walks = biased_walks(
        &net,
        &WalkConfig {
            walks_per_node: 10,
            walk_length: 20,
            ..WalkConfig::default()
        },
        1,
    )
    .unwrap();
    let cfg = SkipGramConfig {
        dim: 16,
        batch_size: 64,
        ..SkipGramConfig::default()
    };
    let (_, report) = train_skipgram(&walks, 12, &cfg, 1).unwrap();
    assert!(report.final_loss < report.initial_loss, "{report:?}");
}

#[test]
fn graphsage_outputs_unit_rows_and_separates_cliques() {
    let net = two_cliques();
    let rows: Vec<Vec<f64>> = (0..10).map(|u| if u < 5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).collect();
    let x = Dense::from_rows(&rows).unwrap();
    let cfg = SageConfig {
        epochs: 30,
        ..SageConfig::default()
    };
    let (model, curve) = train_graphsage(&net, &x, &cfg, 3).unwrap();
    assert_eq!(curve.len(), 30);
    let z = model.embed(&WalkGraph::new(&net), &x).unwrap();
    assert_eq!(z.shape(), (10, 20));
    for u in 0..10 {
        let norm: f64 = z.row(u).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }
    let (intra, inter) = separation(|a, b| cosine(z.row(a), z.row(b)));
    assert!(intra > inter, "intra {intra} inter {inter}");

    let bad = Dense::zeros(9, 2);
    assert!(train_graphsage(&net, &bad, &cfg, 3).is_err());
}

#[test]
fn zero_aggregator_gives_identical_embeddings() {
    let net = six_node();
    let model = SageModel::zeros(3, [4, 4]);
    let z = model.embed(&WalkGraph::new(&net), &Dense::zeros(6, 3)).unwrap();
    for u in 1..6 {
        assert_eq!(z.row(u), z.row(0));
    }
}

#[test]
fn attri2vec_is_a_sigmoid_map_of_features() {
    let net = six_node();
    let mut rows: Vec<Vec<f64>> = (0..6).map(|u| vec![u as f64 / 5.0, (u % 2) as f64, 0.3]).collect();
    rows[5] = rows[1].clone();
    let x = Dense::from_rows(&rows).unwrap();
    let cfg = Attri2VecConfig {
        hidden_dim: 8,
        epochs: 3,
        ..Attri2VecConfig::default()
    };
    let (model, _) = train_attri2vec(&net, &x, &cfg, 2).unwrap();
    let z = model.embed(&x).unwrap();
    assert!(z.as_slice().iter().all(|v| *v > 0.0 && *v < 1.0));
    assert_eq!(z.row(5), z.row(1));

    let unseen = [0.7, 0.2, -1.5];
    let expected: Vec<f64> = (0..8)
        .map(|o| sigmoid(model.weights.row(o).iter().zip(&unseen).map(|(w, x)| w * x).sum()))
        .collect();
    assert_eq!(model.map(&unseen), expected);
}

#[test]
fn trainers_are_deterministic_across_thread_counts() {
    let net = six_node();
    let x = random_dense(6, 2, 1);
    let mut cfg = EmbedConfig::default();
    cfg.node2vec.walk.walks_per_node = 3;
    cfg.node2vec.walk.walk_length = 10;
    cfg.node2vec.skipgram.dim = 8;
    cfg.node2vec.skipgram.window = 3;
    cfg.graphsage.epochs = 2;
    cfg.attri2vec.hidden_dim = 8;
    cfg.attri2vec.epochs = 2;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            ModelKind::ALL
                .into_iter()
                .map(|m| embed(&net, &x, m, FeatureSet::WithSocial, &cfg, 9).unwrap().matrix.vectors)
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(3));
}
