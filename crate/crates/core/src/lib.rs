//! Position-aware node embeddings from random-walk reachability to a set of
//! anchor nodes.
//!
//! The crate covers the whole path from a graph to scored predictions:
//! walk sampling and reachability estimates ([`walks`]), anchor selection
//! ([`anchors`]), a small reverse-mode autodiff engine ([`tensor`]), the
//! network itself ([`model`]), and training, evaluation and attacks
//! ([`train`]). [`pipeline`] wires them together from an
//! [`ExperimentConfig`].

pub mod anchors;
pub mod config;
pub mod error;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod train;
pub mod walks;

pub use anchors::{AnchorSet, AnchorStrategy, BipartiteReach};
pub use config::{AnchorCount, DatasetSpec, ExperimentConfig, WalkLength};
pub use error::{Error, Result};
pub use graph::{Edge, Graph, NodeId};
pub use model::{Aggregator, Embeddings, FinalActivation, ModelConfig, ModelInputs, ModelParams};
pub use tensor::{Tape, Tensor, Var};
pub use train::{Pair, Setting, Split, TaskDataset, TaskKind, TrainConfig};
pub use walks::{SimilarityKind, SimilarityMatrix, WalkConfig, WalkSet};
