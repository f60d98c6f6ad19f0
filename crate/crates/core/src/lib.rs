//! Retrieval by restart random walks on multi-layer similarity graphs.
//!
//! Each data modality contributes one kNN layer over a shared node set. A walk
//! started at the query node picks, at every node, which layer to continue in
//! according to node-specific probabilities learned from partially labeled
//! data, and the stationary visit distribution ranks the collection.
//!
//! ```no_run
//! use multirank::graph::{build_knn_layer, FeatureSet, MultiLayerGraph, SigmaPolicy};
//! use multirank::transition::{compute_alpha, LabelSet, TransitionConfig};
//! use multirank::walk::{rank, retrieve, WalkConfig};
//!
//! # fn run(features: Vec<FeatureSet>, labels: LabelSet) -> multirank::Result<()> {
//! let layers = features
//!     .iter()
//!     .map(|f| build_knn_layer(f, 10, SigmaPolicy::SelfTuning))
//!     .collect::<multirank::Result<Vec<_>>>()?;
//! let graph = MultiLayerGraph::new(layers)?;
//! let alpha = compute_alpha(&graph, &labels, &TransitionConfig::for_query(0))?;
//! let outcome = rank(&graph, &alpha, 0, &WalkConfig::default())?;
//! let top = retrieve(&outcome.vector, 0, 20);
//! # Ok(()) }
//! ```

pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod transition;
pub mod walk;

pub use error::{Error, Result};
