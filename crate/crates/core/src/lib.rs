//! Differentially private push-pull gradient tracking over directed graphs.
//!
//! Each agent splits its gradient tracker into a shared sub-state and a
//! private sub-state. Only the shared part travels on links, and it is
//! perturbed with Laplace noise calibrated to a per-agent privacy budget.
//!
//! The crate is organised as:
//!
//! * [`graph`]: topologies, stochastic weight construction, spanning-tree
//!   validation and the Perron eigenvectors `u`, `v`.
//! * [`problem`]: local objectives, ridge-regression benchmark generator and
//!   its closed-form optimum.
//! * [`privacy`]: Laplace sampling, budget calibration and the sensitivity
//!   replay check.
//! * [`engine`]: the iteration itself (agent-wise and matrix form), the plain
//!   push-pull baseline and trace recording.
//! * [`analysis`]: convergence constants, the 3x3 error-system matrix, the
//!   admissible stepsize and steady-state error bounds.
//! * [`experiment`]: configuration, Monte-Carlo driver and CSV/report output.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod privacy;
pub mod problem;

pub use error::{Error, Result};
