//! Linear-quadratic optimal control for weakly singular Volterra integral equations.
//!
//! The state obeys `X(t) = phi(t) + ∫_0^t [A(t,s)X(s) + B(t,s)u(s)] (t-s)^(beta-1) ds`.
//! Everything is discretized by product integration on a time grid, and the optimal control is
//! computed by a direct solve, by the maximum principle and by causal feedback representations.

// Comparisons are written `!(x > y)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod adjoint;
pub mod blocks;
pub mod blowup;
pub mod causal;
pub mod control;
pub mod error;
pub mod fredholm;
pub mod grid_quad;
pub mod kernel_io;
pub mod lq;
pub mod model;
pub mod problem;
pub mod registry;
pub mod volterra;

pub use blocks::{GridFunction, LowerBlocks};
pub use error::{Error, Result};
pub use grid_quad::{Grid, GridKind, SingularWeights};
pub use problem::{CostData, ProblemData, SampledCost, SampledProblem};
pub use model::LqModel;
pub use registry::Registry;

#[cfg(test)]
pub(crate) mod test_support;
