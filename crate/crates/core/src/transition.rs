//! Node-specific layer-transition probabilities learned from partial labels.
//!
//! For every node and layer we look at the labeled nodes that are strongly
//! connected to it (max-product path weight at least `β · w̄(l)`), measure how
//! dominated that set is by a single category, normalize across layers, gate
//! the result through a sigmoid, and combine the node's gate with the query's.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;

use crate::graph::{Alpha, LayerGraph, MultiLayerGraph};
use crate::{Error, Result};

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_SIGMOID_A: f64 = 20.0;
pub const DEFAULT_SIGMOID_N_STAR: f64 = 0.5;

/// Partial assignment of nodes to categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    assignments: Vec<Option<usize>>,
    categories: Vec<String>,
}

impl LabelSet {
    pub fn unlabeled(nodes: usize) -> Self {
        Self {
            assignments: vec![None; nodes],
            categories: Vec::new(),
        }
    }

    /// Builds from `(node, category name)` pairs. Category ids are assigned in
    /// order of first appearance.
    pub fn from_pairs<I, S>(nodes: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, S)>,
        S: AsRef<str>,
    {
        let mut labels = Self::unlabeled(nodes);
        for (node, name) in pairs {
            labels.assign(node, name.as_ref())?;
        }
        Ok(labels)
    }

    pub fn assign(&mut self, node: usize, category: &str) -> Result<()> {
        if node >= self.assignments.len() {
            return Err(Error::Input(format!(
                "labeled node {node} out of range for {} nodes",
                self.assignments.len()
            )));
        }
        let id = match self.categories.iter().position(|c| c == category) {
            Some(id) => id,
            None => {
                self.categories.push(category.to_owned());
                self.categories.len() - 1
            }
        };
        self.assignments[node] = Some(id);
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.assignments.len()
    }

    pub fn category(&self, node: usize) -> Option<usize> {
        self.assignments[node]
    }

    pub fn category_name(&self, id: usize) -> &str {
        &self.categories[id]
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn labeled_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }

    pub fn iter_labeled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|c| (i, c)))
    }

    /// Keeps only the labels of nodes where `keep[i]` is true. Category ids
    /// and names are preserved.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        Self {
            assignments: self
                .assignments
                .iter()
                .zip(keep)
                .map(|(a, &k)| if k { *a } else { None })
                .collect(),
            categories: self.categories.clone(),
        }
    }
}

/// Parameters of the layer-transition computation for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionConfig {
    /// Radius factor: `d_l = β · w̄(l)`.
    pub beta: f64,
    pub sigmoid_a: f64,
    pub sigmoid_n_star: f64,
    pub query: usize,
}

impl TransitionConfig {
    pub fn for_query(query: usize) -> Self {
        Self {
            beta: DEFAULT_BETA,
            sigmoid_a: DEFAULT_SIGMOID_A,
            sigmoid_n_star: DEFAULT_SIGMOID_N_STAR,
            query,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.sigmoid_a > 0.0 && self.sigmoid_a.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigmoid slope must be positive, got {}",
                self.sigmoid_a
            )));
        }
        if !(0.0..=1.0).contains(&self.sigmoid_n_star) {
            return Err(Error::Parameter(format!(
                "sigmoid threshold must lie in [0, 1], got {}",
                self.sigmoid_n_star
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    product: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.product
            .total_cmp(&other.product)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best max-product path weight from `source` to every node, settling nodes
/// in decreasing order and never expanding a node whose product is below
/// `floor`. Weights are at most 1, so products only shrink along a path and
/// the first settlement of a node is final.
fn max_products(layer: &LayerGraph, source: usize, floor: f64) -> Vec<f64> {
    let mut best = vec![0.0; layer.nodes()];
    let mut settled = vec![false; layer.nodes()];
    let mut heap = BinaryHeap::new();
    best[source] = 1.0;
    heap.push(Frontier {
        product: 1.0,
        node: source,
    });
    while let Some(Frontier { product, node }) = heap.pop() {
        if settled[node] {
            continue;
        }
        if product < floor {
            break;
        }
        settled[node] = true;
        for (next, w) in layer.neighbors(node) {
            let p = product * w;
            if !settled[next] && p > best[next] && p >= floor {
                best[next] = p;
                heap.push(Frontier {
                    product: p,
                    node: next,
                });
            }
        }
    }
    best
}

/// Maximum over paths from `i` to `j` of the product of consecutive edge
/// weights; 0 when `j` is unreachable.
///
/// # Panics
/// If `i == j` or either node is out of range.
pub fn max_product_distance(layer: &LayerGraph, i: usize, j: usize) -> f64 {
    assert!(
        i != j,
        "max-product distance of a node to itself is undefined"
    );
    assert!(j < layer.nodes(), "node {j} out of range");
    max_products(layer, i, 0.0)[j]
}

/// Nodes other than `i` whose max-product distance from `i` is at least
/// `radius`, in ascending id order.
pub fn strong_neighborhood(layer: &LayerGraph, i: usize, radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0 && radius <= 1.0) {
        return Err(Error::Parameter(format!(
            "radius must lie in (0, 1], got {radius}"
        )));
    }
    if i >= layer.nodes() {
        return Err(Error::Input(format!("node {i} out of range")));
    }
    let best = max_products(layer, i, radius);
    Ok(best
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j != i && p >= radius)
        .map(|(j, _)| j)
        .collect())
}

/// `β · w̄(l)` clamped to at most 1.
pub fn radius(mean_weight: f64, beta: f64) -> f64 {
    (beta * mean_weight).min(1.0)
}

/// Fraction of the labeled members that belong to the most common category,
/// or `None` when no member is labeled.
pub fn purity(members: &[usize], labels: &LabelSet) -> Option<f64> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let mut labeled = 0usize;
    for &m in members {
        if let Some(c) = labels.category(m) {
            *counts.entry(c).or_default() += 1;
            labeled += 1;
        }
    }
    let top = counts.values().copied().max()?;
    Some(top as f64 / labeled as f64)
}

/// Per-node, per-layer neighborhood purity and its across-layer normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodPurity {
    nodes: usize,
    layers: usize,
    labeled_counts: Vec<usize>,
    raw: Vec<Option<f64>>,
    normalized: Vec<f64>,
}

impl NeighborhoodPurity {
    pub fn compute(graph: &MultiLayerGraph, labels: &LabelSet, beta: f64) -> Result<Self> {
        let m = graph.nodes();
        let layer_count = graph.layer_count();
        if labels.nodes() != m {
            return Err(Error::Config(format!(
                "label set covers {} nodes, graph has {m}",
                labels.nodes()
            )));
        }
        let radii: Vec<f64> = graph
            .mean_weights()
            .iter()
            .map(|&w| radius(w, beta))
            .collect();
        let rows: Vec<Vec<(usize, Option<f64>)>> = (0..m)
            .into_par_iter()
            .map(|i| {
                (0..layer_count)
                    .map(|l| {
                        let hood = strong_neighborhood(graph.layer(l), i, radii[l])
                            .expect("node and radius validated");
                        let labeled = hood
                            .iter()
                            .filter(|&&j| labels.category(j).is_some())
                            .count();
                        (labeled, purity(&hood, labels))
                    })
                    .collect()
            })
            .collect();
        let (labeled_counts, raw) = rows.into_iter().flatten().unzip();
        Ok(Self::with_counts(m, layer_count, labeled_counts, raw))
    }

    /// Normalizes precomputed raw purities (one `Option` per node and layer,
    /// row-major).
    pub fn from_raw(nodes: usize, layers: usize, raw: Vec<Option<f64>>) -> Self {
        let counts = raw.iter().map(|r| usize::from(r.is_some())).collect();
        Self::with_counts(nodes, layers, counts, raw)
    }

    fn with_counts(
        nodes: usize,
        layers: usize,
        labeled_counts: Vec<usize>,
        raw: Vec<Option<f64>>,
    ) -> Self {
        assert_eq!(raw.len(), nodes * layers);
        let mut normalized = Vec::with_capacity(raw.len());
        for row in raw.chunks_exact(layers) {
            let sum: f64 = row.iter().map(|r| r.unwrap_or(0.0)).sum();
            if row.iter().all(Option::is_none) || sum == 0.0 {
                normalized.extend(std::iter::repeat_n(1.0 / layers as f64, layers));
            } else {
                normalized.extend(row.iter().map(|r| r.unwrap_or(0.0) / sum));
            }
        }
        Self {
            nodes,
            layers,
            labeled_counts,
            raw,
            normalized,
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn labeled_count(&self, i: usize, l: usize) -> usize {
        self.labeled_counts[i * self.layers + l]
    }

    pub fn raw(&self, i: usize, l: usize) -> Option<f64> {
        self.raw[i * self.layers + l]
    }

    pub fn normalized_row(&self, i: usize) -> &[f64] {
        &self.normalized[i * self.layers..(i + 1) * self.layers]
    }
}

pub fn sigmoid_gate(value: f64, a: f64, n_star: f64) -> f64 {
    1.0 / (1.0 + (-a * (value - n_star)).exp())
}

/// Sigmoid-gated purities `z(l, i)` for all nodes. Query independent, so one
/// gate serves every query on the same graph and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGate {
    nodes: usize,
    layers: usize,
    z: Vec<f64>,
}

impl LayerGate {
    pub fn new(purity: &NeighborhoodPurity, a: f64, n_star: f64) -> Self {
        let z = (0..purity.nodes())
            .flat_map(|i| purity.normalized_row(i).to_vec())
            .map(|n| sigmoid_gate(n, a, n_star))
            .collect();
        Self {
            nodes: purity.nodes(),
            layers: purity.layers(),
            z,
        }
    }

    pub fn from_config(
        graph: &MultiLayerGraph,
        labels: &LabelSet,
        config: &TransitionConfig,
    ) -> Result<Self> {
        config.validate()?;
        if labels.labeled_count() == 0 {
            return Err(Error::Config(
                "node-specific layer transitions need at least one labeled node".into(),
            ));
        }
        let purity = NeighborhoodPurity::compute(graph, labels, config.beta)?;
        Ok(Self::new(&purity, config.sigmoid_a, config.sigmoid_n_star))
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.layers..(i + 1) * self.layers]
    }

    fn combined_row(&self, i: usize, query: usize) -> Vec<f64> {
        let zq = self.z_row(query);
        let raw: Vec<f64> = self.z_row(i).iter().zip(zq).map(|(a, b)| a * b).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    fn check_query(&self, query: usize) -> Result<()> {
        if query >= self.nodes {
            return Err(Error::Input(format!(
                "query {query} out of range for {} nodes",
                self.nodes
            )));
        }
        Ok(())
    }

    /// `α_li ∝ z(l, i) · z(l, q)`, normalized per node.
    pub fn alpha_for_query(&self, query: usize) -> Result<Alpha> {
        self.check_query(query)?;
        let values = (0..self.nodes)
            .flat_map(|i| self.combined_row(i, query))
            .collect();
        Alpha::new(self.nodes, self.layers, values)
    }

    /// The query's own row, installed at every node.
    pub fn query_only_alpha(&self, query: usize) -> Result<Alpha> {
        self.check_query(query)?;
        Alpha::broadcast(self.nodes, &self.combined_row(query, query))
    }
}

fn check_sizes(graph: &MultiLayerGraph, labels: &LabelSet, query: usize) -> Result<()> {
    if query >= graph.nodes() {
        return Err(Error::Input(format!(
            "query {query} out of range for {} nodes",
            graph.nodes()
        )));
    }
    if labels.nodes() != graph.nodes() {
        return Err(Error::Config(format!(
            "label set covers {} nodes, graph has {}",
            labels.nodes(),
            graph.nodes()
        )));
    }
    Ok(())
}

/// Node-specific layer-transition matrix for `config.query`.
pub fn compute_alpha(
    graph: &MultiLayerGraph,
    labels: &LabelSet,
    config: &TransitionConfig,
) -> Result<Alpha> {
    check_sizes(graph, labels, config.query)?;
    LayerGate::from_config(graph, labels, config)?.alpha_for_query(config.query)
}

/// Every node gets the query's node-specific row.
pub fn query_only_alpha(
    graph: &MultiLayerGraph,
    labels: &LabelSet,
    config: &TransitionConfig,
) -> Result<Alpha> {
    check_sizes(graph, labels, config.query)?;
    LayerGate::from_config(graph, labels, config)?.query_only_alpha(config.query)
}

pub fn uniform_alpha(nodes: usize, layers: usize) -> Alpha {
    Alpha::uniform(nodes, layers)
}
