mod common;

use common::{brute_force_betweenness, connected_graphs, degree_oracle, dense_eigenvector, SmallGraph};
use proptest::prelude::*;
use refnet::centrality::{betweenness_centrality, degree_centrality, eigenvector_centrality, EigenConfig};
use refnet::{Error, Network};

fn graph(n: usize, edges: &[(usize, usize)]) -> Network {
    let mut net = Network::new(n, false);
    for &(u, v) in edges {
        net.add_edge(u, v, 1.0).unwrap();
    }
    net
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn degree_examples() {
    let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
    assert_eq!(degree_centrality(&k3).unwrap().values, vec![1.0; 3]);
    let path = graph(3, &[(0, 1), (1, 2)]);
    assert_eq!(degree_centrality(&path).unwrap().values, vec![0.5, 1.0, 0.5]);
    let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
    assert_eq!(degree_centrality(&star).unwrap().values, vec![1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    assert!(degree_centrality(&Network::new(1, false)).is_err());
}

#[test]
fn eigenvector_examples() {
    let cfg = EigenConfig::default();
    let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
    assert!(close(&eigenvector_centrality(&k3, cfg).unwrap().values, &[1.0 / 3f64.sqrt(); 3], 1e-9));
    let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
    let v = eigenvector_centrality(&star, cfg).unwrap().values;
    assert!(close(&v, &[0.5f64.sqrt(), 0.408248290463863, 0.408248290463863, 0.408248290463863], 1e-9));
    let two_edges = graph(4, &[(0, 1), (2, 3)]);
    assert!(close(&eigenvector_centrality(&two_edges, cfg).unwrap().values, &[0.5; 4], 1e-9));
    assert!(eigenvector_centrality(&Network::new(3, false), cfg).is_err());
}

#[test]
fn eigenvector_reports_non_convergence() {
    let path = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
    let err = eigenvector_centrality(&path, EigenConfig { tol: 1e-15, max_iter: 3 }).unwrap_err();
    assert!(matches!(err, Error::NoConvergence { iterations: 3, .. }));
}

#[test]
fn betweenness_examples() {
    let path = graph(4, &[(0, 1), (1, 2), (2, 3)]);
    assert_eq!(betweenness_centrality(&path).unwrap().values, vec![0.0, 2.0, 2.0, 0.0]);
    let star = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
    assert_eq!(betweenness_centrality(&star).unwrap().values, vec![6.0, 0.0, 0.0, 0.0, 0.0]);
    let k3 = graph(3, &[(0, 1), (1, 2), (0, 2)]);
    assert_eq!(betweenness_centrality(&k3).unwrap().values, vec![0.0; 3]);
}

#[test]
fn isolated_nodes_score_zero() {
    let net = graph(5, &[(0, 1), (1, 2), (0, 2), (2, 3)]);
    assert_eq!(degree_centrality(&net).unwrap().values[4], 0.0);
    assert_eq!(betweenness_centrality(&net).unwrap().values[4], 0.0);
    assert_eq!(eigenvector_centrality(&net, EigenConfig::default()).unwrap().values[4], 0.0);
}

#[test]
fn directed_input_rejected() {
    let mut net = Network::new(2, true);
    net.add_edge(0, 1, 1.0).unwrap();
    assert!(degree_centrality(&net).is_err());
    assert!(betweenness_centrality(&net).is_err());
}

#[test]
fn enumeration_counts_connected_graphs() {
    let counts: Vec<usize> = (1..=7).map(|n| connected_graphs(n).len()).collect();
    assert_eq!(counts, vec![1, 1, 2, 6, 21, 112, 853]);
}

#[test]
fn oracle_sweep_up_to_six_nodes() {
    for n in 2..=6 {
        for g in connected_graphs(n) {
            let net = g.network();
            assert_eq!(degree_centrality(&net).unwrap().values, degree_oracle(&g));
            let b = betweenness_centrality(&net).unwrap().values;
            assert!(close(&b, &brute_force_betweenness(&g), 1e-12), "{g:?}");
            let e = eigenvector_centrality(&net, EigenConfig::default()).unwrap().values;
            assert!(close(&e, &dense_eigenvector(&g), 1e-6), "{g:?}");
        }
    }
}

#[test]
fn eigenvector_residual_bound() {
    let cfg = EigenConfig::default();
    for g in connected_graphs(6) {
        let net = g.network();
        let v = eigenvector_centrality(&net, cfg).unwrap().values;
        let av: Vec<f64> = (0..6).map(|u| net.adj(u).iter().map(|&(w, _)| v[w]).sum()).collect();
        let lambda: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
        let residual = av.iter().zip(&v).map(|(a, x)| (a - lambda * x).powi(2)).sum::<f64>().sqrt();
        assert!(residual < 10.0 * cfg.tol * lambda.max(1.0), "{g:?}: {residual:e}");
        assert!(v.iter().all(|&x| x >= 0.0));
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn relabel(g: &SmallGraph, perm: &[usize]) -> SmallGraph {
    let n = g.n();
    let mut adj = vec![0u8; n];
    for (u, v) in g.edges() {
        adj[perm[u]] |= 1 << perm[v];
        adj[perm[v]] |= 1 << perm[u];
    }
    SmallGraph { adj }
}

proptest! {
    #[test]
    fn measures_invariant_under_relabeling(mask in 1u32..(1 << 21), perm in Just((0..7usize).collect::<Vec<_>>()).prop_shuffle()) {
        let mut adj = vec![0u8; 7];
        let mut bit = 0;
        for u in 0..7 {
            for v in u + 1..7 {
                if mask >> bit & 1 == 1 {
                    adj[u] |= 1 << v;
                    adj[v] |= 1 << u;
                }
                bit += 1;
            }
        }
        let g = SmallGraph { adj };
        prop_assume!(g.is_connected());
        let h = relabel(&g, &perm);
        let (a, b) = (g.network(), h.network());
        let permute = |v: Vec<f64>| { let mut out = vec![0.0; 7]; for u in 0..7 { out[perm[u]] = v[u]; } out };
        prop_assert_eq!(permute(degree_centrality(&a).unwrap().values), degree_centrality(&b).unwrap().values);
        prop_assert!(close(&permute(betweenness_centrality(&a).unwrap().values), &betweenness_centrality(&b).unwrap().values, 1e-12));
        let cfg = EigenConfig::default();
        prop_assert!(close(&permute(eigenvector_centrality(&a, cfg).unwrap().values), &eigenvector_centrality(&b, cfg).unwrap().values, 1e-8));
    }
}
