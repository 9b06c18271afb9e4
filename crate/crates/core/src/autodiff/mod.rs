//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Graph`] is assembled once with [`GraphBuilder`] from a closed set of
//! primitives (matmul, add, elementwise product, ReLU, mean, scaling,
//! softmax cross-entropy, squared error and logit normalization) and then
//! evaluated any number of times. Parameters live in one flat vector;
//! parameter nodes are row-major views into it, and gradients come back in
//! the same layout.
//!
//! The graph is generic over [`Scalar`]. Evaluating it over [`Dual`] numbers
//! whose tangents hold `v` and running the reverse pass gives `H·v`
//! (forward-over-reverse), which is what [`Graph::hvp`] does by default.
//!
//! ReLU uses the subgradient 0 at 0.

mod array;
mod graph;
mod scalar;

pub use array::Array;
pub use graph::{Evaluation, Graph, GraphBuilder, HvpMethod, NodeId, LOGIT_VARIANCE_FLOOR};
pub use scalar::{Dual, Scalar};
