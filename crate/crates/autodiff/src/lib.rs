//! Reverse-mode automatic differentiation over dense, row-major `f64` arrays.
//!
//! The engine is deliberately small: a [`Graph`] is an append-only list of
//! nodes (so it is acyclic and topologically ordered by construction), inputs
//! are bound by name at evaluation time, and gradients are returned by name.
//! It covers exactly what point-cloud EdgeConv networks, shared MLPs and the
//! classification losses need, plus the [`Adam`] optimizer.

mod adam;
mod array;
mod error;
mod graph;
mod io;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use array::DenseArray;
pub use error::{AutodiffError, Result};
pub use graph::{
    evaluate_with_gradients, leaky_relu, softmax_cross_entropy, Evaluation, Graph, NeighborFn,
    NodeId, Op,
};
pub use io::{load_weights, save_weights, WeightEntry, WeightManifest};

/// Named parameter arrays in a deterministic (sorted) order.
pub type ParamSet = std::collections::BTreeMap<String, DenseArray>;
