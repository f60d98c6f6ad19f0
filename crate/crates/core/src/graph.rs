//! Similarity layers built from per-modality feature matrices.

use rayon::prelude::*;

use crate::{Error, Result};

/// Dense feature matrix for one modality, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    name: String,
    items: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FeatureSet {
    /// Wraps a row-major `items × dim` matrix.
    pub fn new(name: impl Into<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("feature dimension must be at least 1".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::Input(format!(
                "{} values do not form rows of length {dim}",
                values.len()
            )));
        }
        let items = values.len() / dim;
        if items < 2 {
            return Err(Error::Input(format!(
                "a feature set needs at least 2 items, got {items}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            name: name.into(),
            items,
            dim,
            values,
        })
    }

    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Input(format!(
                "row {i} has {} entries, expected {dim}",
                rows[i].len()
            )));
        }
        Self::new(name, dim, rows.concat())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian kernel `exp(-‖a − b‖² / σ²)`.
pub fn gaussian_weight(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "feature vectors differ in dimension ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(kernel(squared_distance(a, b), sigma * sigma))
}

// Far pairs underflow to 0; keep weights strictly positive.
fn kernel(sq_dist: f64, sigma_sq: f64) -> f64 {
    (-sq_dist / sigma_sq).exp().max(f64::MIN_POSITIVE)
}

/// Kernel bandwidth used when building a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    Explicit(f64),
    /// σ² is the mean squared distance from each node to its k-th neighbor.
    SelfTuning,
}

/// One undirected edge, stored with `src < dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Sparse weighted undirected graph with its row-stochastic transition table.
///
/// Adjacency is kept in CSR form; each row lists neighbors by ascending id with
/// the edge weight and the transition probability `w_ij / Σ_j w_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    nodes: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    probs: Vec<f64>,
}

impl LayerGraph {
    /// Builds a layer from unordered pairs. Each pair may be given in either
    /// orientation but only once.
    pub fn from_edges<I>(nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut list: Vec<Edge> = Vec::new();
        for (a, b, w) in edges {
            if a >= nodes || b >= nodes {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) out of range for {nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::Input(format!("self-loop on node {a}")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) weight {w} outside (0, 1]"
                )));
            }
            let (src, dst) = if a < b { (a, b) } else { (b, a) };
            list.push(Edge {
                src,
                dst,
                weight: w,
            });
        }
        list.sort_by_key(|e| (e.src, e.dst));
        if let Some(pair) = list
            .windows(2)
            .find(|p| (p[0].src, p[0].dst) == (p[1].src, p[1].dst))
        {
            return Err(Error::Input(format!(
                "duplicate edge ({}, {})",
                pair[0].src, pair[0].dst
            )));
        }

        let mut degree = vec![0usize; nodes];
        for e in &list {
            degree[e.src] += 1;
            degree[e.dst] += 1;
        }
        let mut offsets = Vec::with_capacity(nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let total = offsets[nodes];
        let mut targets = vec![0usize; total];
        let mut weights = vec![0.0; total];
        let mut cursor = offsets[..nodes].to_vec();
        // With edges sorted by (src, dst), lower neighbors land first (as dst),
        // then higher ones (as src), so every row comes out ascending.
        for e in &list {
            targets[cursor[e.dst]] = e.src;
            weights[cursor[e.dst]] = e.weight;
            cursor[e.dst] += 1;
        }
        for e in &list {
            targets[cursor[e.src]] = e.dst;
            weights[cursor[e.src]] = e.weight;
            cursor[e.src] += 1;
        }
        debug_assert!((0..nodes).all(|i| targets[offsets[i]..offsets[i + 1]]
            .windows(2)
            .all(|w| w[0] < w[1])));

        let mut probs = vec![0.0; total];
        for i in 0..nodes {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let sum: f64 = weights[lo..hi].iter().sum();
            for k in lo..hi {
                probs[k] = weights[k] / sum;
            }
        }

        Ok(Self {
            nodes,
            edges: list,
            offsets,
            targets,
            weights,
            probs,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Edges ordered by `(src, dst)`, one entry per unordered pair.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.degree(i) == 0
    }

    /// `(neighbor, weight)` pairs of node `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// `(neighbor, p_ij)` pairs of node `i`.
    pub fn transitions(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.probs[range].iter().copied())
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.weights[range.start + k])
    }
}

/// Indices of the `k` nearest other rows to row `i`, nearest first, with
/// their squared distances. Ties go to the lower index.
fn nearest(features: &FeatureSet, i: usize, k: usize) -> Vec<(usize, f64)> {
    let x = features.row(i);
    let mut cand: Vec<(usize, f64)> = (0..features.items())
        .filter(|&j| j != i)
        .map(|j| (j, squared_distance(x, features.row(j))))
        .collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, order);
        cand.truncate(k);
    }
    cand.sort_by(order);
    cand
}

/// Builds a union-kNN layer: an edge joins `i` and `j` when either is among
/// the other's `k` nearest neighbors by Euclidean distance.
pub fn build_knn_layer(features: &FeatureSet, k: usize, sigma: SigmaPolicy) -> Result<LayerGraph> {
    let m = features.items();
    if k == 0 || k >= m {
        return Err(Error::Parameter(format!(
            "k must satisfy 1 <= k < M (k = {k}, M = {m})"
        )));
    }
    let knn: Vec<Vec<(usize, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| nearest(features, i, k))
        .collect();

    let sigma_sq = match sigma {
        SigmaPolicy::Explicit(s) => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Parameter(format!("sigma must be positive, got {s}")));
            }
            s * s
        }
        SigmaPolicy::SelfTuning => {
            let mean = knn.iter().map(|row| row[k - 1].1).sum::<f64>() / m as f64;
            // Every selected pair is at distance 0, so any bandwidth gives weight 1.
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        }
    };

    let mut pairs: Vec<(usize, usize, f64)> = knn
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&(j, d)| (i.min(j), i.max(j), d)))
        .collect();
    pairs.sort_by_key(|p| (p.0, p.1));
    pairs.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    LayerGraph::from_edges(
        m,
        pairs
            .into_iter()
            .map(|(i, j, d)| (i, j, kernel(d, sigma_sq))),
    )
}

/// Mean weight over undirected edges, each pair counted once.
pub fn mean_edge_weight(layer: &LayerGraph) -> Result<f64> {
    if layer.edge_count() == 0 {
        return Err(Error::DegenerateLayer("layer has no edges".into()));
    }
    Ok(layer.edges().iter().map(|e| e.weight).sum::<f64>() / layer.edge_count() as f64)
}

/// `L` layers over one shared node set together with their mean edge weights.
///
/// Layer-transition probabilities depend on the query, so they live in a
/// separate [`Alpha`] matrix rather than on the graph itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLayerGraph {
    layers: Vec<LayerGraph>,
    mean_weights: Vec<f64>,
}

impl MultiLayerGraph {
    pub fn new(layers: Vec<LayerGraph>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::Input(
                "a multi-layer graph needs at least one layer".into(),
            ));
        };
        let m = first.nodes();
        if let Some((l, bad)) = layers.iter().enumerate().find(|(_, g)| g.nodes() != m) {
            return Err(Error::Input(format!(
                "layer {l} has {} nodes, layer 0 has {m}",
                bad.nodes()
            )));
        }
        let mean_weights = layers
            .iter()
            .enumerate()
            .map(|(l, g)| {
                mean_edge_weight(g)
                    .map_err(|_| Error::DegenerateLayer(format!("layer {l} has no edges")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            mean_weights,
        })
    }

    pub fn nodes(&self) -> usize {
        self.layers[0].nodes()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerGraph] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerGraph {
        &self.layers[l]
    }

    pub fn mean_weights(&self) -> &[f64] {
        &self.mean_weights
    }
}

/// Row-major `M × L` matrix of layer-transition probabilities; row `i` holds
/// the probability of continuing in each layer at node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alpha {
    nodes: usize,
    layers: usize,
    values: Vec<f64>,
}

impl Alpha {
    /// Validates entries in `[0, 1]` and unit row sums.
    pub fn new(nodes: usize, layers: usize, values: Vec<f64>) -> Result<Self> {
        if layers == 0 || values.len() != nodes * layers {
            return Err(Error::Input(format!(
                "alpha needs {nodes} x {layers} entries, got {}",
                values.len()
            )));
        }
        for (i, row) in values.chunks_exact(layers).enumerate() {
            if row.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::Input(format!(
                    "alpha row {i} has entries outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Input(format!("alpha row {i} sums to {s}")));
            }
        }
        Ok(Self {
            nodes,
            layers,
            values,
        })
    }

    /// Every entry `1 / L`.
    pub fn uniform(nodes: usize, layers: usize) -> Self {
        Self {
            nodes,
            layers,
            values: vec![1.0 / layers as f64; nodes * layers],
        }
    }

    /// The same row repeated for every node.
    pub fn broadcast(nodes: usize, row: &[f64]) -> Result<Self> {
        Self::new(nodes, row.len(), row.repeat(nodes))
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.layers..(i + 1) * self.layers]
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.values[i * self.layers + l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> FeatureSet {
        FeatureSet::new("line", 1, points.to_vec()).unwrap()
    }

    #[test]
    fn kernel_closed_forms() {
        assert_eq!(gaussian_weight(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        let w = gaussian_weight(&[0.0, 0.0], &[3.0, 4.0], 5.0).unwrap();
        assert!((w - (-1.0f64).exp()).abs() < 1e-15);
        assert!((w - 0.3678794).abs() < 1e-7);
        let w = gaussian_weight(&[0.0], &[2.0], 1.0).unwrap();
        assert!((w - 0.0183156).abs() < 1e-7);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(matches!(
            gaussian_weight(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            gaussian_weight(&[0.0], &[1.0], 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            gaussian_weight(&[0.0], &[1.0], -2.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn knn_on_three_points() {
        let layer =
            build_knn_layer(&line(&[0.0, 1.0, 3.0]), 1, SigmaPolicy::Explicit(1.0)).unwrap();
        let pairs: Vec<_> = layer.edges().iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(layer.degree(1), 2);
        let e1 = (-1.0f64).exp();
        let e4 = (-4.0f64).exp();
        assert!((layer.weight(0, 1).unwrap() - e1).abs() < 1e-15);
        assert!((layer.weight(2, 1).unwrap() - e4).abs() < 1e-15);
        let p10 = layer.transitions(1).find(|&(j, _)| j == 0).unwrap().1;
        assert!((p10 - e1 / (e1 + e4)).abs() < 1e-15);
        assert!((p10 - 0.95257).abs() < 1e-5);
    }

    #[test]
    fn knn_full_degree_is_complete() {
        let f = FeatureSet::new(
            "f",
            2,
            vec![0.0, 0.0, 1.0, 0.5, -2.0, 1.0, 0.3, 0.3, 4.0, 1.0],
        )
        .unwrap();
        let layer = build_knn_layer(&f, 4, SigmaPolicy::SelfTuning).unwrap();
        assert_eq!(layer.edge_count(), 10);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let f = line(&[0.0, 1.0, 3.0]);
        assert!(matches!(
            build_knn_layer(&f, 3, SigmaPolicy::SelfTuning),
            Err(Error::Parameter(_))
        ));
        assert!(build_knn_layer(&f, 0, SigmaPolicy::SelfTuning).is_err());
    }

    #[test]
    fn duplicate_rows_get_unit_weight() {
        let layer = build_knn_layer(&line(&[2.0, 2.0, 2.0]), 1, SigmaPolicy::SelfTuning).unwrap();
        assert!(layer.edges().iter().all(|e| e.weight == 1.0));
        // Ties resolve to the lower index.
        let pairs: Vec<_> = layer.edges().iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn mean_weight_examples() {
        let g = LayerGraph::from_edges(2, [(0, 1, 0.4)]).unwrap();
        assert!((mean_edge_weight(&g).unwrap() - 0.4).abs() < 1e-15);
        let g = LayerGraph::from_edges(3, [(0, 1, 0.2), (2, 1, 0.6)]).unwrap();
        assert!((mean_edge_weight(&g).unwrap() - 0.4).abs() < 1e-15);
        let g = LayerGraph::from_edges(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(mean_edge_weight(&g).unwrap(), 1.0);
        let g = LayerGraph::from_edges(3, []).unwrap();
        assert!(matches!(
            mean_edge_weight(&g),
            Err(Error::DegenerateLayer(_))
        ));
    }

    #[test]
    fn from_edges_validation() {
        assert!(LayerGraph::from_edges(3, [(1, 1, 0.5)]).is_err());
        assert!(LayerGraph::from_edges(3, [(0, 1, 0.5), (1, 0, 0.5)]).is_err());
        assert!(LayerGraph::from_edges(3, [(0, 1, 0.0)]).is_err());
        assert!(LayerGraph::from_edges(3, [(0, 1, 1.5)]).is_err());
        assert!(LayerGraph::from_edges(3, [(0, 3, 0.5)]).is_err());
    }

    #[test]
    fn multilayer_checks_node_counts() {
        let a = LayerGraph::from_edges(3, [(0, 1, 0.5)]).unwrap();
        let b = LayerGraph::from_edges(4, [(0, 1, 0.5)]).unwrap();
        assert!(MultiLayerGraph::new(vec![a.clone(), b]).is_err());
        let empty = LayerGraph::from_edges(3, []).unwrap();
        assert!(matches!(
            MultiLayerGraph::new(vec![a, empty]),
            Err(Error::DegenerateLayer(_))
        ));
    }

    #[test]
    fn alpha_validation() {
        assert!(Alpha::new(2, 2, vec![0.5, 0.5, 0.3, 0.7]).is_ok());
        assert!(Alpha::new(2, 2, vec![0.5, 0.6, 0.3, 0.7]).is_err());
        assert!(Alpha::new(1, 2, vec![1.2, -0.2]).is_err());
        let u = Alpha::uniform(3, 4);
        assert!(u.row(2).iter().all(|&a| a == 0.25));
    }

    #[test]
    fn feature_set_rejects_nan_and_tiny() {
        assert!(FeatureSet::new("f", 1, vec![0.0, f64::NAN]).is_err());
        assert!(FeatureSet::new("f", 2, vec![0.0, 1.0]).is_err());
        assert!(FeatureSet::from_rows("f", &[vec![0.0, 1.0], vec![1.0]]).is_err());
    }
}
