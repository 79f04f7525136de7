//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};
use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use refnet::Network;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Simple undirected graph on at most 8 nodes as neighbor bitmasks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SmallGraph {
    pub adj: Vec<u8>,
}

impl SmallGraph {
    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn has(&self, u: usize, v: usize) -> bool {
        self.adj[u] >> v & 1 == 1
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| self.has(u, v))
            .collect()
    }

    pub fn network(&self) -> Network {
        let mut net = Network::new(self.n(), false);
        for (u, v) in self.edges() {
            net.add_edge(u, v, 1.0).unwrap();
        }
        net
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut seen = 1u8;
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            let fresh = self.adj[u] & !seen;
            seen |= fresh;
            stack.extend((0..n).filter(|&v| fresh >> v & 1 == 1));
        }
        seen.count_ones() as usize == n
    }

    /// Isomorphism-invariant code: nodes are ordered by (degree, sorted
    /// neighbor degrees) and the edge bitstring is minimized over all
    /// orderings within equal-invariant classes.
    pub fn canonical(&self) -> u64 {
        let n = self.n();
        let deg: Vec<u32> = self.adj.iter().map(|r| r.count_ones()).collect();
        let inv: Vec<(u32, Vec<u32>)> = (0..n)
            .map(|u| {
                let mut nd: Vec<u32> = (0..n).filter(|&v| self.has(u, v)).map(|v| deg[v]).collect();
                nd.sort_unstable();
                (deg[u], nd)
            })
            .collect();
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.sort_by(|&a, &b| inv[a].cmp(&inv[b]));
        let class: Vec<usize> = {
            let mut c = vec![0; n];
            for i in 1..n {
                c[i] = c[i - 1] + usize::from(inv[nodes[i]] != inv[nodes[i - 1]]);
            }
            c
        };
        let mut best = u64::MAX;
        let mut order = Vec::with_capacity(n);
        let mut used = 0u8;
        self.search(&nodes, &class, &mut order, &mut used, &mut best);
        best | (n as u64) << 60
    }

    fn search(
        &self,
        nodes: &[usize],
        class: &[usize],
        order: &mut Vec<usize>,
        used: &mut u8,
        best: &mut u64,
    ) {
        let pos = order.len();
        if pos == nodes.len() {
            let mut code = 0u64;
            for i in 0..pos {
                for j in i + 1..pos {
                    code = code << 1 | u64::from(self.has(order[i], order[j]));
                }
            }
            *best = (*best).min(code);
            return;
        }
        for k in 0..nodes.len() {
            let u = nodes[k];
            if class[k] == class[pos] && *used >> u & 1 == 0 {
                *used |= 1 << u;
                order.push(u);
                self.search(nodes, class, order, used, best);
                order.pop();
                *used &= !(1 << u);
            }
        }
    }
}

/// One representative of every connected simple graph on `n` nodes, up to
/// isomorphism. Each connected graph has a non-cut vertex, so extending the
/// connected graphs on `n - 1` nodes by one vertex reaches all of them.
pub fn connected_graphs(n: usize) -> Vec<SmallGraph> {
    assert!((1..=8).contains(&n));
    if n == 1 {
        return vec![SmallGraph { adj: vec![0] }];
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for g in connected_graphs(n - 1) {
        for mask in 1u16..(1 << (n - 1)) {
            let mut adj = g.adj.clone();
            adj.push(mask as u8);
            for (u, row) in adj.iter_mut().enumerate().take(n - 1) {
                if mask >> u & 1 == 1 {
                    *row |= 1 << (n - 1);
                }
            }
            let h = SmallGraph { adj };
            if seen.insert(h.canonical()) {
                out.push(h);
            }
        }
    }
    out
}

/// Betweenness by listing every shortest path of every unordered pair.
pub fn brute_force_betweenness(g: &SmallGraph) -> Vec<f64> {
    let n = g.n();
    let dist = |s: usize| {
        let mut d = vec![usize::MAX; n];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for v in 0..n {
                if g.has(u, v) && d[v] == usize::MAX {
                    d[v] = d[u] + 1;
                    q.push_back(v);
                }
            }
        }
        d
    };
    let mut out = vec![0.0; n];
    for s in 0..n {
        let ds = dist(s);
        for t in s + 1..n {
            if ds[t] == usize::MAX {
                continue;
            }
            let mut paths: Vec<Vec<usize>> = Vec::new();
            let mut stack = vec![vec![s]];
            while let Some(path) = stack.pop() {
                let u = *path.last().unwrap();
                if u == t {
                    paths.push(path);
                    continue;
                }
                for v in 0..n {
                    if g.has(u, v) && ds[v] == ds[u] + 1 && ds[v] <= ds[t] {
                        let mut p = path.clone();
                        p.push(v);
                        stack.push(p);
                    }
                }
            }
            let total = paths.len() as f64;
            for p in &paths {
                for &v in &p[1..p.len() - 1] {
                    out[v] += 1.0 / total;
                }
            }
        }
    }
    out
}

/// Unit-norm nonnegative eigenvector of the largest adjacency eigenvalue.
pub fn dense_eigenvector(g: &SmallGraph) -> Vec<f64> {
    let n = g.n();
    let a: DMatrix<f64> = DMatrix::from_fn(n, n, |i, j| if g.has(i, j) { 1.0 } else { 0.0 });
    let eig = SymmetricEigen::new(a);
    let k = (0..n)
        .max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
        .unwrap();
    let v: Vec<f64> = eig.eigenvectors.column(k).iter().map(|x: &f64| x.abs()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

pub fn degree_oracle(g: &SmallGraph) -> Vec<f64> {
    let n = g.n();
    (0..n)
        .map(|u| (0..n).filter(|&v| g.has(u, v)).count() as f64 / (n - 1) as f64)
        .collect()
}

/// Shapley values as the average marginal contribution over all `n!`
/// feature orderings, with the interventional value function.
pub fn permutation_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let value = |coalition: &[bool]| -> f64 {
        background
            .iter()
            .map(|b| {
                let z: Vec<f64> = (0..n).map(|j| if coalition[j] { x[j] } else { b[j] }).collect();
                f(&z)
            })
            .sum::<f64>()
            / background.len() as f64
    };
    let mut phi = vec![0.0; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut count = 0usize;
    loop {
        let mut coalition = vec![false; n];
        let mut prev = value(&coalition);
        for &i in &perm {
            coalition[i] = true;
            let next = value(&coalition);
            phi[i] += next - prev;
            prev = next;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    phi.iter().map(|p| p / count as f64).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Upper-tail p-value of Pearson's χ² statistic for observed vs expected counts.
pub fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}
