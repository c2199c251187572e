//! Density estimation with tree-based tensor networks.
//!
//! A density on `X_1 × … × X_d` is modelled as a tree tensor network over a
//! dimension partition tree, fitted by minimizing the L2 contrast with
//! closed-form alternating updates. Ranks and the tree itself are adapted.

pub mod bases;
pub mod contraction;
pub mod dimension_tree;
pub mod distributions;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod linalg;
pub mod rank_adapter;
pub mod samples;
pub mod tensor;
pub mod tree_adapter;
pub mod tree_tensor;

pub use bases::Basis;
pub use dimension_tree::{DimSet, DimensionTree, NodeId, RankVector};
pub use error::{Error, Result};
pub use samples::SampleSet;
pub use tree_tensor::{FullTensor, TreeTensor};
