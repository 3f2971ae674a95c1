//! Directed exponential network model with a reciprocity interaction.
//!
//! Each unordered node pair {i, j} carries a four-state dyad outcome
//! (a_ij, a_ji) whose distribution depends on node out-propensities
//! `alpha`, in-propensities `beta`, a reciprocity coefficient `rho`, and a
//! sparsity level `mu` that scales every nonzero outcome.
//!
//! The crate provides:
//!
//! - [`model`] — exact dyad distribution, log-likelihood, analytic
//!   first/second derivatives, and an information-rank diagnostic;
//! - [`sampler`] — seeded, order-independent generation of parameter sets
//!   and networks;
//! - [`estimator`] — the MLE engine: per-node coordinate descent with
//!   Newton-Raphson or gradient-ascent sub-solvers plus a reciprocity
//!   update;
//! - [`discretize`] — finite per-node parameter grids and the MLE
//!   restricted to them (reciprocity stays continuous);
//! - [`metrics`] — mean-square / uniform error bounds, identification-aware
//!   shift adjustment, and theoretical rate curves for overlays.

pub mod discretize;
pub mod estimator;
pub mod metrics;
pub mod model;
pub mod sampler;

pub use discretize::{DiscretizedFit, Grid};
pub use estimator::{FitConfig, FitResult, MuMode, OuterCriterion, SubSolver};
pub use metrics::{ErrorReport, RateKind};
pub use model::{DyadOutcome, DyadPmf, GlobalParams, Network, NodeParams};
pub use sampler::{ParamSpec, Seed};

use thiserror::Error;

/// Errors surfaced by constructors and fitting entry points. Numerical
/// routines themselves are total on validated inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("sparse dyad pmf degenerate: p00 = {p00:.3e} with mu = {mu}")]
    DegeneratePmf { p00: f64, mu: f64 },

    #[error("network is empty; plug-in edge density is zero")]
    EmptyNetwork,

    #[error("invalid grid spacing h = {0}; need 0 < h <= 2B")]
    InvalidGridSpacing(f64),

    #[error("initial point is not on the grid at node {node}")]
    InitOffGrid { node: usize },

    #[error("discrete search space has {0:.3e} points; cap is 1e7")]
    SearchSpaceTooLarge(f64),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
