//! Regularized iterative LQR and iterative DDP for discrete-time nonlinear
//! control, with the constant calculators and dense oracles used to certify
//! them.
//!
//! The problem is `min Σ_{t=1}^{τ} h_t(x_t)` subject to
//! `x_{t+1} = f(x_t, u_t)`, `x_0` fixed, written as `J(u) = h(g(u))`.

// `!(x > 0.0)` also rejects NaN, which is the point of those guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cost;
pub mod dense_ref;
pub mod dynamics;
pub mod feedlin;
pub mod linalg;
pub mod solver;

pub use cost::{CostConstants, CostError, StageCost};
pub use dynamics::{DynError, Dynamic, DynamicConstants, Provenance, SamplingBox};
pub use solver::{Command, ConvergenceTrace, LinQuadModel, PolicySequence, Problem, SolverConfig, Trajectory};
