//! Simulation, analysis and control of epidemic spreading on directed networks.
//!
//! The crate is organised around five areas:
//!
//! * [`graph`]: weighted directed graphs, generators, the edge-list format,
//!   Perron eigenvalue computations and node/link removal.
//! * [`meanfield`]: deterministic population and network ODE models with a
//!   shared fixed-step RK4 integrator.
//! * [`stochastic`]: exact continuous-time Markov chain simulation, Monte
//!   Carlo estimators and the exact master-equation solver for small graphs.
//! * [`allocation`]: spectral threshold checks and budget-constrained rate
//!   allocation solved as a geometric program.
//! * [`optctrl`]: forward-backward sweep solvers for bang-bang epidemic
//!   control problems.
//!
//! Monte Carlo fan-out and grid searches run on rayon when the `parallel`
//! feature is enabled (the default) and sequentially otherwise. Results do not
//! depend on the feature: every parallel reduction is ordered by index.

// `!(x < y)` is deliberate wherever NaN must fall into the rejecting branch,
// and index loops read better than zips in the matrix-heavy code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocation;
pub mod graph;
pub mod linalg;
pub mod meanfield;
pub mod optctrl;
pub mod parallel;
pub mod rng;
pub mod stochastic;

pub use graph::{Graph, GraphKind, SpectralResult};
pub use meanfield::{RateModel, Trajectory};
