#![allow(dead_code)]

//! Random instances and independent oracles shared by the integration tests.

use multirank::graph::{
    build_knn_layer, Alpha, FeatureSet, LayerGraph, MultiLayerGraph, SigmaPolicy,
};
use multirank::transition::{compute_alpha, LabelSet, TransitionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_features(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> FeatureSet {
    let values = (0..m * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    FeatureSet::new("rand", dim, values).unwrap()
}

pub fn random_knn_layer(rng: &mut ChaCha8Rng, m: usize) -> LayerGraph {
    let dim = rng.random_range(1..=4);
    let k = rng.random_range(1..=6.min(m - 1));
    let sigma = if rng.random_bool(0.5) {
        SigmaPolicy::SelfTuning
    } else {
        SigmaPolicy::Explicit(rng.random_range(0.3..3.0))
    };
    build_knn_layer(&random_features(rng, m, dim), k, sigma).unwrap()
}

/// Sparse random layer that may leave nodes isolated (as a loaded graph could).
pub fn random_sparse_layer(rng: &mut ChaCha8Rng, m: usize) -> LayerGraph {
    let p = 2.0 / m as f64;
    let mut edges = vec![(0, 1, rng.random_range(0.05..=1.0))];
    for i in 0..m {
        for j in i + 1..m {
            if (i, j) != (0, 1) && rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.05..=1.0)));
            }
        }
    }
    LayerGraph::from_edges(m, edges).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, m: usize, categories: usize, fraction: f64) -> LabelSet {
    let mut labels = LabelSet::unlabeled(m);
    labels.assign(0, "c0").unwrap();
    for i in 1..m {
        if rng.random_bool(fraction) {
            labels
                .assign(i, &format!("c{}", rng.random_range(0..categories)))
                .unwrap();
        }
    }
    labels
}

pub fn random_alpha_rows(rng: &mut ChaCha8Rng, m: usize, l: usize) -> Alpha {
    let mut values = Vec::with_capacity(m * l);
    for _ in 0..m {
        let row: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = row.iter().sum();
        let mut row: Vec<f64> = row.iter().map(|v| v / s).collect();
        // absorb rounding so the row sums to one
        let tail: f64 = row[..l - 1].iter().sum();
        row[l - 1] = 1.0 - tail;
        values.extend(row);
    }
    Alpha::new(m, l, values).unwrap()
}

pub struct Instance {
    pub graph: MultiLayerGraph,
    pub alpha: Alpha,
    pub query: usize,
    pub eta: f64,
}

/// Random multi-layer instance: M in [10, 200], L in 1..=4, η from {0.5, 0.8, 0.9}.
/// Every third instance uses sparse layers that may contain isolated nodes.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = rng(seed);
    let m = rng.random_range(10..=200);
    let l = rng.random_range(1..=4);
    let eta = [0.5, 0.8, 0.9][rng.random_range(0..3)];
    let sparse = seed % 3 == 2;
    let layers = (0..l)
        .map(|_| {
            if sparse {
                random_sparse_layer(&mut rng, m)
            } else {
                random_knn_layer(&mut rng, m)
            }
        })
        .collect();
    let graph = MultiLayerGraph::new(layers).unwrap();
    let query = rng.random_range(0..m);
    let alpha = if seed.is_multiple_of(2) {
        let labels = random_labels(&mut rng, m, 3, 0.3);
        let mut cfg = TransitionConfig::for_query(query);
        cfg.beta = rng.random_range(0.2..2.0);
        compute_alpha(&graph, &labels, &cfg).unwrap()
    } else {
        random_alpha_rows(&mut rng, m, l)
    };
    Instance {
        graph,
        alpha,
        query,
        eta,
    }
}

/// Dense row-stochastic transition matrix of one layer, built from the edge
/// list without touching the library's transition table.
pub fn dense_transition(layer: &LayerGraph) -> Vec<Vec<f64>> {
    let m = layer.nodes();
    let mut w = vec![vec![0.0; m]; m];
    for e in layer.edges() {
        w[e.src][e.dst] = e.weight;
        w[e.dst][e.src] = e.weight;
    }
    for row in &mut w {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    w
}

/// Fixed point of `r = (1 − η)π + η Pᵀ r` for a dense row-stochastic `P`
/// (rows without mass restart at the query). Runs until the L1 change drops
/// below 1e-15 or the iteration budget, far past rounding level, runs out.
pub fn dense_ppr(p: &[Vec<f64>], query: usize, eta: f64) -> Vec<f64> {
    let m = p.len();
    let mut r = vec![0.0; m];
    r[query] = 1.0;
    for _ in 0..2_000 {
        let mut next = vec![0.0; m];
        next[query] = 1.0 - eta;
        for i in 0..m {
            let row_mass: f64 = p[i].iter().sum();
            if row_mass == 0.0 {
                next[query] += eta * r[i];
                continue;
            }
            for j in 0..m {
                next[j] += eta * p[i][j] * r[i];
            }
        }
        let diff: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if diff < 1e-15 {
            break;
        }
    }
    r
}

/// Max-product distance from `source` to every node by enumerating all simple
/// paths. Products multiply edge weights in path order from `source`.
pub fn brute_force_max_products(layer: &LayerGraph, source: usize) -> Vec<f64> {
    fn dfs(
        layer: &LayerGraph,
        node: usize,
        product: f64,
        visited: &mut Vec<bool>,
        best: &mut Vec<f64>,
    ) {
        for (next, w) in layer.neighbors(node) {
            if visited[next] {
                continue;
            }
            let p = product * w;
            if p > best[next] {
                best[next] = p;
            }
            visited[next] = true;
            dfs(layer, next, p, visited, best);
            visited[next] = false;
        }
    }
    let mut best = vec![0.0; layer.nodes()];
    let mut visited = vec![false; layer.nodes()];
    visited[source] = true;
    dfs(layer, source, 1.0, &mut visited, &mut best);
    best
}

/// Average precision straight from its definition: at every position holding
/// a relevant item, the precision of the prefix ending there; summed and
/// divided by the number of relevant items.
pub fn brute_force_ap(relevance: &[bool], total_relevant: usize) -> f64 {
    let mut sum = 0.0;
    for k in 0..relevance.len() {
        if relevance[k] {
            let prefix = &relevance[..=k];
            sum += prefix.iter().filter(|&&r| r).count() as f64 / prefix.len() as f64;
        }
    }
    sum / total_relevant as f64
}
