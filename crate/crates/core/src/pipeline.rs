//! Query execution over a shared graph under a chosen layer-transition policy.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::eval::{concat_distances, ndcg_at_p, relevance_flags, GroundTruth, NDCG_DEPTHS};
use crate::graph::{Alpha, FeatureSet, MultiLayerGraph};
use crate::transition::{LabelSet, LayerGate, TransitionConfig};
use crate::walk::{rank, retrieve, RankOutcome, WalkConfig};
use crate::{Error, Result};

/// How layer-transition probabilities are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaPolicy {
    /// Learned per node from labels and combined with the query's row.
    NodeSpecific,
    /// `1 / L` everywhere.
    Uniform,
    /// The query's learned row at every node.
    QueryOnly,
    /// No walk: distance in the standardized concatenated feature space.
    ConcatBaseline,
}

impl AlphaPolicy {
    pub fn needs_labels(self) -> bool {
        matches!(self, Self::NodeSpecific | Self::QueryOnly)
    }
}

impl fmt::Display for AlphaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NodeSpecific => "node-specific",
            Self::Uniform => "uniform",
            Self::QueryOnly => "query-only",
            Self::ConcatBaseline => "concat-baseline",
        })
    }
}

impl FromStr for AlphaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-specific" => Ok(Self::NodeSpecific),
            "uniform" => Ok(Self::Uniform),
            "query-only" => Ok(Self::QueryOnly),
            "concat-baseline" => Ok(Self::ConcatBaseline),
            other => Err(Error::Config(format!("unknown alpha policy {other:?}"))),
        }
    }
}

/// Ranked ids with scores, plus walk diagnostics when a walk was run.
#[derive(Debug, Clone)]
pub struct QueryResult {
    pub query: usize,
    pub ranked: Vec<(usize, f64)>,
    pub outcome: Option<RankOutcome>,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<usize> {
        self.ranked.iter().map(|r| r.0).collect()
    }

    pub fn converged(&self) -> bool {
        self.outcome.as_ref().is_none_or(|o| o.converged)
    }
}

/// Everything needed to answer queries; immutable and shareable across threads.
pub struct Engine<'a> {
    graph: &'a MultiLayerGraph,
    policy: AlphaPolicy,
    gate: Option<LayerGate>,
    features: Option<&'a [FeatureSet]>,
    walk: WalkConfig,
}

impl<'a> Engine<'a> {
    /// `transition.query` is ignored; the gate is shared by all queries.
    pub fn new(
        graph: &'a MultiLayerGraph,
        policy: AlphaPolicy,
        labels: Option<&LabelSet>,
        transition: &TransitionConfig,
        walk: WalkConfig,
        features: Option<&'a [FeatureSet]>,
    ) -> Result<Self> {
        walk.validate()?;
        let gate = if policy.needs_labels() {
            let labels = labels.ok_or_else(|| {
                Error::Config(format!("the {policy} alpha policy needs a label file"))
            })?;
            Some(LayerGate::from_config(graph, labels, transition)?)
        } else {
            None
        };
        if policy == AlphaPolicy::ConcatBaseline {
            let fs = features.ok_or_else(|| {
                Error::Config("the concat-baseline policy needs feature files".into())
            })?;
            if fs.iter().any(|f| f.items() != graph.nodes()) {
                return Err(Error::Config(
                    "feature files disagree with the graph's node count".into(),
                ));
            }
        }
        Ok(Self {
            graph,
            policy,
            gate,
            features,
            walk,
        })
    }

    pub fn graph(&self) -> &MultiLayerGraph {
        self.graph
    }

    pub fn alpha(&self, query: usize) -> Result<Alpha> {
        match (self.policy, &self.gate) {
            (AlphaPolicy::NodeSpecific, Some(g)) => g.alpha_for_query(query),
            (AlphaPolicy::QueryOnly, Some(g)) => g.query_only_alpha(query),
            _ => Ok(Alpha::uniform(self.graph.nodes(), self.graph.layer_count())),
        }
    }

    pub fn run(&self, query: usize, top_n: usize) -> Result<QueryResult> {
        let m = self.graph.nodes();
        if query >= m {
            return Err(Error::Input(format!(
                "unknown query id {query} ({m} nodes)"
            )));
        }
        if self.policy == AlphaPolicy::ConcatBaseline {
            let dist = concat_distances(self.features.expect("checked at construction"), query)?;
            let mut ids: Vec<usize> = (0..m).filter(|&i| i != query).collect();
            ids.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
            ids.truncate(top_n);
            return Ok(QueryResult {
                query,
                ranked: ids.into_iter().map(|i| (i, dist[i])).collect(),
                outcome: None,
            });
        }
        let alpha = self.alpha(query)?;
        let outcome = rank(self.graph, &alpha, query, &self.walk)?;
        let scores = outcome.vector.scores();
        let ranked = retrieve(&outcome.vector, query, top_n)
            .into_iter()
            .map(|i| (i, scores[i]))
            .collect();
        Ok(QueryResult {
            query,
            ranked,
            outcome: Some(outcome),
        })
    }

    /// Runs queries concurrently; results come back in input order.
    pub fn run_all(&self, queries: &[usize], top_n: usize) -> Result<Vec<QueryResult>> {
        queries.par_iter().map(|&q| self.run(q, top_n)).collect()
    }
}

/// Mean NDCG at [`NDCG_DEPTHS`] over queries with a non-empty relevant set.
pub fn mean_ndcg(results: &[QueryResult], truth: &GroundTruth) -> [f64; 4] {
    let mut sums = [0.0; 4];
    let mut n = 0usize;
    for r in results {
        let Some(rel) = truth.relevant(r.query).filter(|s| !s.is_empty()) else {
            continue;
        };
        let flags = relevance_flags(&r.ids(), &rel);
        for (s, p) in sums.iter_mut().zip(NDCG_DEPTHS) {
            *s += ndcg_at_p(&flags, p);
        }
        n += 1;
    }
    sums.map(|s| if n == 0 { 0.0 } else { s / n as f64 })
}
