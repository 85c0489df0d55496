//! Adaptive dual-free SDCA for ℓ2-regularized empirical risk minimization.
//!
//! The problem is `min_w (1/n) Σ ℓ(x_iᵀw; y_i) + λ/2 ‖w‖²`. Solvers keep a
//! pseudo-dual vector `α` with `w = (1/λn) Σ α_i x_i` and pick coordinates
//! in proportion to their dual residues.

pub mod cli;
pub mod data;
pub mod error;
pub mod loss;
pub mod probability;
pub mod sampler;
pub mod solver;

pub use data::{Dataset, Scaling};
pub use error::{Error, Result};
pub use loss::{LossKind, LossModel};
pub use probability::{CaseParams, ConvexityCase, EsoMode, EsoParams, ResidueVector};
pub use sampler::{AliasTable, SamplingPlan, TreeSampler};
pub use solver::{RunResult, Solver, SolverConfig, SolverState, Variant};
