//! Restart random walk over a multi-layer graph.
//!
//! One step maps `r` to `(1 − η)π + η·B·r` with `B = Σ_l P_lᵀ Λ_l`: the mass at
//! node `i` is split across layers by `α_i` and then across the neighbors of
//! `i` in each layer by the transition probabilities. `B` is never formed;
//! each step scatters along the CSR rows of every layer in fixed layer order.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::graph::{Alpha, MultiLayerGraph};
use crate::{Error, Result};

pub const DEFAULT_ETA: f64 = 0.9;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1000;
/// Largest node count accepted by [`rank_direct`].
pub const DIRECT_SOLVE_MAX_NODES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    /// Probability of continuing the walk; `1 − η` is the restart probability.
    pub eta: f64,
    /// L1 tolerance between consecutive iterates.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

impl WalkConfig {
    pub fn with_eta(eta: f64) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Parameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!(
            "eta must lie in (0, 1), got {eta}"
        )));
    }
    Ok(())
}

/// Nonnegative scores over all nodes summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    scores: Vec<f64>,
}

impl RankVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(Error::Input("rank scores must be nonnegative".into()));
        }
        let sum: f64 = scores.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("rank scores sum to {sum}")));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.scores
    }
}

/// Result of a power iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOutcome {
    pub vector: RankVector,
    pub iterations: usize,
    /// L1 distance between the last two iterates.
    pub residual: f64,
    pub converged: bool,
    pub elapsed: Duration,
}

impl RankOutcome {
    /// `query=<id> iters=<n> residual=<r> ms=<t>`
    pub fn diagnostics(&self, query: usize) -> String {
        format!(
            "query={query} iters={} residual={:e} ms={:.3}",
            self.iterations,
            self.residual,
            self.elapsed.as_secs_f64() * 1e3
        )
    }
}

/// Per-node layer weights after dangling-direction handling.
///
/// A layer in which node `i` has no neighbors gets weight 0 and the rest of
/// the row is rescaled. When nothing positive is left the node is dangling and
/// its outgoing mass returns to the restart vector.
#[derive(Debug, Clone)]
pub struct WalkOperator<'a> {
    graph: &'a MultiLayerGraph,
    weights: Vec<f64>,
    dangling: Vec<usize>,
}

impl<'a> WalkOperator<'a> {
    pub fn new(graph: &'a MultiLayerGraph, alpha: &Alpha) -> Result<Self> {
        let (m, layers) = (graph.nodes(), graph.layer_count());
        if alpha.nodes() != m || alpha.layers() != layers {
            return Err(Error::Input(format!(
                "alpha is {} x {}, graph is {m} x {layers}",
                alpha.nodes(),
                alpha.layers()
            )));
        }
        let mut weights = vec![0.0; m * layers];
        let mut dangling = Vec::new();
        for i in 0..m {
            let row = &mut weights[i * layers..(i + 1) * layers];
            let mut dropped = false;
            for (l, w) in row.iter_mut().enumerate() {
                if graph.layer(l).is_isolated(i) {
                    dropped |= alpha.get(i, l) > 0.0;
                } else {
                    *w = alpha.get(i, l);
                }
            }
            let kept: f64 = row.iter().sum();
            if kept == 0.0 {
                dangling.push(i);
            } else if dropped {
                row.iter_mut().for_each(|w| *w /= kept);
            }
        }
        Ok(Self {
            graph,
            weights,
            dangling,
        })
    }

    pub fn graph(&self) -> &MultiLayerGraph {
        self.graph
    }

    /// Writes `(1 − η)π + η(B·r + d·π)` into `out`, where `d` is the mass
    /// sitting on dangling nodes.
    pub fn apply(&self, r: &[f64], restart: &[f64], eta: f64, out: &mut [f64]) {
        let layers = self.graph.layer_count();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (l, layer) in self.graph.layers().iter().enumerate() {
            for (i, &mass) in r.iter().enumerate() {
                let share = self.weights[i * layers + l] * mass;
                if share == 0.0 {
                    continue;
                }
                for (j, p) in layer.transitions(i) {
                    out[j] += share * p;
                }
            }
        }
        let stranded: f64 = self.dangling.iter().map(|&i| r[i]).sum();
        let back = 1.0 - eta + eta * stranded;
        for (o, &p) in out.iter_mut().zip(restart) {
            *o = eta * *o + back * p;
        }
    }

    /// Dense `B` including the dangling redirection, for direct solves.
    fn dense(&self, restart: &[f64]) -> DMatrix<f64> {
        let m = self.graph.nodes();
        let layers = self.graph.layer_count();
        let mut b = DMatrix::zeros(m, m);
        for (l, layer) in self.graph.layers().iter().enumerate() {
            for i in 0..m {
                let a = self.weights[i * layers + l];
                if a == 0.0 {
                    continue;
                }
                for (j, p) in layer.transitions(i) {
                    b[(j, i)] += a * p;
                }
            }
        }
        for &i in &self.dangling {
            for (j, &p) in restart.iter().enumerate() {
                b[(j, i)] += p;
            }
        }
        b
    }
}

/// One application of the walk operator with an arbitrary restart vector.
pub fn combined_step(
    graph: &MultiLayerGraph,
    alpha: &Alpha,
    r: &[f64],
    restart: &[f64],
    eta: f64,
) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Parameter(format!(
            "eta must lie in [0, 1), got {eta}"
        )));
    }
    let m = graph.nodes();
    if r.len() != m || restart.len() != m {
        return Err(Error::Input(format!(
            "vectors must have length {m} (got {} and {})",
            r.len(),
            restart.len()
        )));
    }
    let op = WalkOperator::new(graph, alpha)?;
    let mut out = vec![0.0; m];
    op.apply(r, restart, eta, &mut out);
    Ok(out)
}

pub fn indicator(nodes: usize, query: usize) -> Vec<f64> {
    let mut pi = vec![0.0; nodes];
    pi[query] = 1.0;
    pi
}

/// Power iteration state starting from the query indicator.
pub struct PowerIteration<'a> {
    op: WalkOperator<'a>,
    restart: Vec<f64>,
    eta: f64,
    current: Vec<f64>,
    scratch: Vec<f64>,
    steps: usize,
}

impl<'a> PowerIteration<'a> {
    pub fn new(graph: &'a MultiLayerGraph, alpha: &Alpha, query: usize, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let m = graph.nodes();
        if query >= m {
            return Err(Error::Input(format!(
                "query {query} out of range for {m} nodes"
            )));
        }
        let restart = indicator(m, query);
        Ok(Self {
            op: WalkOperator::new(graph, alpha)?,
            current: restart.clone(),
            scratch: vec![0.0; m],
            restart,
            eta,
            steps: 0,
        })
    }

    /// Advances one step and returns the L1 change.
    pub fn step(&mut self) -> f64 {
        self.op
            .apply(&self.current, &self.restart, self.eta, &mut self.scratch);
        std::mem::swap(&mut self.current, &mut self.scratch);
        self.steps += 1;
        self.current
            .iter()
            .zip(&self.scratch)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn into_vector(self) -> Vec<f64> {
        self.current
    }
}

/// Power iteration from the query indicator until the L1 change drops below
/// `tol` or `max_iters` steps are taken. A non-converged run still returns its
/// last iterate with `converged == false`.
pub fn rank(
    graph: &MultiLayerGraph,
    alpha: &Alpha,
    query: usize,
    config: &WalkConfig,
) -> Result<RankOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut it = PowerIteration::new(graph, alpha, query, config.eta)?;
    let mut residual = f64::INFINITY;
    while it.steps() < config.max_iters {
        residual = it.step();
        if residual < config.tol {
            break;
        }
    }
    let iterations = it.steps();
    let converged = residual < config.tol;
    Ok(RankOutcome {
        vector: RankVector {
            scores: it.into_vector(),
        },
        iterations,
        residual,
        converged,
        elapsed: start.elapsed(),
    })
}

/// Stationary vector from the dense system `(I − ηB) r = (1 − η)π`.
pub fn rank_direct(
    graph: &MultiLayerGraph,
    alpha: &Alpha,
    query: usize,
    eta: f64,
) -> Result<RankVector> {
    let m = graph.nodes();
    if m > DIRECT_SOLVE_MAX_NODES {
        return Err(Error::TooLarge(format!(
            "{m} nodes exceeds the dense-solve cap of {DIRECT_SOLVE_MAX_NODES}"
        )));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Parameter(format!(
            "eta must lie in [0, 1), got {eta}"
        )));
    }
    if query >= m {
        return Err(Error::Input(format!(
            "query {query} out of range for {m} nodes"
        )));
    }
    let pi = indicator(m, query);
    let op = WalkOperator::new(graph, alpha)?;
    let system = DMatrix::identity(m, m) - op.dense(&pi) * eta;
    let rhs = DVector::from_vec(pi) * (1.0 - eta);
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Input("walk system is singular".into()))?;
    // Round-off can leave entries a hair below zero.
    let scores = solution.iter().map(|&v| v.max(0.0)).collect();
    Ok(RankVector { scores })
}

/// Walk with every layer equally likely at every node.
pub fn rank_uniform_baseline(
    graph: &MultiLayerGraph,
    query: usize,
    config: &WalkConfig,
) -> Result<RankOutcome> {
    let alpha = Alpha::uniform(graph.nodes(), graph.layer_count());
    rank(graph, &alpha, query, config)
}

/// Node ids by descending score, query excluded, ties to the lower id.
pub fn retrieve(vector: &RankVector, query: usize, top_n: usize) -> Vec<usize> {
    let scores = vector.scores();
    let mut ids: Vec<usize> = (0..scores.len()).filter(|&i| i != query).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids.truncate(top_n);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LayerGraph;

    fn pair_graph() -> MultiLayerGraph {
        MultiLayerGraph::new(vec![LayerGraph::from_edges(2, [(0, 1, 0.7)]).unwrap()]).unwrap()
    }

    #[test]
    fn single_step_on_pair() {
        let g = pair_graph();
        let out = combined_step(&g, &Alpha::uniform(2, 1), &[1.0, 0.0], &[1.0, 0.0], 0.9).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-15);
        assert!((out[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_eta_returns_restart() {
        let g = pair_graph();
        let out = combined_step(&g, &Alpha::uniform(2, 1), &[0.3, 0.7], &[0.0, 1.0], 0.0).unwrap();
        assert_eq!(out, vec![0.0, 1.0]);
        let r = rank_direct(&g, &Alpha::uniform(2, 1), 1, 0.0).unwrap();
        assert_eq!(r.scores(), &[0.0, 1.0]);
    }

    #[test]
    fn pair_closed_form() {
        let g = pair_graph();
        let alpha = Alpha::uniform(2, 1);
        let expected = [1.0 / 1.9, 0.9 / 1.9];
        let out = rank(&g, &alpha, 0, &WalkConfig::default()).unwrap();
        assert!(out.converged);
        for (a, b) in out.vector.scores().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((out.vector.scores()[0] - 0.52632).abs() < 1e-5);
        let direct = rank_direct(&g, &alpha, 0, 0.9).unwrap();
        for (a, b) in direct.scores().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn half_eta_converges_fast() {
        let layer = LayerGraph::from_edges(
            5,
            [
                (0, 1, 0.3),
                (1, 2, 0.9),
                (2, 3, 0.5),
                (3, 4, 0.2),
                (0, 4, 1.0),
                (1, 3, 0.6),
            ],
        )
        .unwrap();
        let g = MultiLayerGraph::new(vec![layer]).unwrap();
        let cfg = WalkConfig {
            eta: 0.5,
            tol: 1e-12,
            max_iters: 1000,
        };
        let out = rank(&g, &Alpha::uniform(5, 1), 2, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 42, "took {}", out.iterations);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let g = pair_graph();
        let cfg = WalkConfig {
            eta: 0.9,
            tol: 1e-12,
            max_iters: 3,
        };
        let out = rank(&g, &Alpha::uniform(2, 1), 0, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.residual > 1e-12);
        let line = out.diagnostics(0);
        assert!(line.starts_with("query=0 iters=3 residual="));
        assert!(line.contains(" ms="));
    }

    #[test]
    fn dangling_mass_goes_home() {
        // node 2 is isolated in the only layer
        let layer = LayerGraph::from_edges(3, [(0, 1, 0.5)]).unwrap();
        let g = MultiLayerGraph::new(vec![layer]).unwrap();
        let alpha = Alpha::uniform(3, 1);
        let out = combined_step(&g, &alpha, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 0.8).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 0.0]);
        let power = rank(&g, &alpha, 2, &WalkConfig::default()).unwrap();
        let direct = rank_direct(&g, &alpha, 2, 0.9).unwrap();
        for (a, b) in power.vector.scores().iter().zip(direct.scores()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_layer_mass_moves_to_other_layer() {
        let a = LayerGraph::from_edges(3, [(0, 1, 0.5)]).unwrap();
        let b = LayerGraph::from_edges(3, [(0, 2, 0.5), (1, 2, 0.5)]).unwrap();
        let g = MultiLayerGraph::new(vec![a, b]).unwrap();
        let alpha = Alpha::uniform(3, 2);
        // node 2 only has neighbors in layer b
        let out = combined_step(&g, &alpha, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 0.5).unwrap();
        assert!((out[0] - 0.75).abs() < 1e-15);
        assert!((out[1] - 0.25).abs() < 1e-15);
        assert_eq!(out[2], 0.0);
    }

    #[test]
    fn retrieve_order_and_ties() {
        let v = RankVector::new(vec![0.5, 0.2, 0.3]).unwrap();
        assert_eq!(retrieve(&v, 0, 2), vec![2, 1]);
        let mut scores = vec![0.0; 8];
        scores[7] = 0.25;
        scores[3] = 0.25;
        scores[0] = 0.5;
        let v = RankVector::new(scores).unwrap();
        assert_eq!(retrieve(&v, 0, 2), vec![3, 7]);
        assert_eq!(retrieve(&v, 0, 7).len(), 7);
        assert!(!retrieve(&v, 0, 7).contains(&0));
    }

    #[test]
    fn direct_solve_cap() {
        let m = DIRECT_SOLVE_MAX_NODES + 1;
        let layer = LayerGraph::from_edges(m, (1..m).map(|i| (i - 1, i, 1.0))).unwrap();
        let g = MultiLayerGraph::new(vec![layer]).unwrap();
        assert!(matches!(
            rank_direct(&g, &Alpha::uniform(m, 1), 0, 0.9),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn config_rejects_bad_eta() {
        assert!(WalkConfig::with_eta(1.0).validate().is_err());
        assert!(WalkConfig::with_eta(0.0).validate().is_err());
        assert!(WalkConfig::with_eta(0.5).validate().is_ok());
    }
}
