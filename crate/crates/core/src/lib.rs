//! Graph-based approximate nearest neighbor search.
//!
//! The crate builds approximate k-NN graphs by NN-Descent, diversifies
//! them with occlusion pruning, builds HNSW indexes, searches flat graphs
//! by best-first traversal from random seeds, and ships the experiment
//! harness that compares those configurations by Recall@1 against
//! distance evaluations.

pub mod bench;
pub mod datasets;
pub mod diversify;
pub mod error;
pub mod graph;
pub mod hnsw;
pub mod metric;
pub mod nndescent;
pub mod search;

pub use error::{Error, Result};
pub use graph::{AdjacencyGraph, Neighbor};
pub use metric::{distance, Metric, VectorSet};
