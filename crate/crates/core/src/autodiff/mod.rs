//! Reverse-mode differentiation over scalars, dense vectors, and sparse
//! matrices.
//!
//! The tape is matrix-level: every sparse operation records its inputs and
//! its adjoint is computed by a dedicated vector-Jacobian product. Adjoints of
//! sparse nodes are value arrays on the node's own pattern, so
//! `mask(adjoint) = mask(primal)` holds by construction.

mod symbolic_cache;
mod tape;
mod vjp;

pub use symbolic_cache::SymbolicCache;
pub use tape::{Coef, NodeId, SparseLinearMap, Tape, Value};
pub use vjp::{vjp_sparse_logdet, vjp_sparse_matmul, vjp_sparse_solve, MaskedAdjoint};
