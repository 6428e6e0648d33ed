//! Universal self-supervised learning (U-SSL) across families of graphs.
//!
//! A family is a set of graphs that are instances of the same underlying
//! phenomenon (e.g. citation networks) but carry disparate node features.
//! Each graph gets a small private encoder that projects its features into a
//! shared embedding space; a single universal backbone (a transformer over
//! hop-aggregated node tokens, or GCN/GraphSAGE in ablations) is trained by
//! minimizing the *sum* of per-graph pretext losses. Downstream node
//! classification then trains one linear head per graph on top of the frozen
//! backbone.
//!
//! The crate is organized along the pipeline:
//!
//! - [`graph`]: dataset loading, validation, and synthetic family generation
//! - [`sparse`]: CSR matrices used for feature propagation
//! - [`preprocess`]: adjacency normalization, Laplacian positional
//!   embeddings, hop tokenization, and PairSim pair sampling
//! - [`model`]: the universal model (per-graph encoders, shared backbone,
//!   pretext and downstream heads) with analytic gradients throughout
//! - [`train`]: the four regimes (U-SSL / SSL pre-training, frozen-backbone
//!   fine-tuning, supervised baseline) plus the adapt-new-graph workflow
//! - [`eval`]: metrics, comparison protocols, and report emission

pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod preprocess;
pub mod seeds;
pub mod sparse;
pub mod train;

pub use error::{Error, Result};
