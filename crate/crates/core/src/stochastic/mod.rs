//! Exact stochastic simulation of epidemic Markov chains.
//!
//! [`ssa_network_sis`] and [`ssa_population`] run the direct method: draw an
//! exponential holding time from the total event rate, then pick the event in
//! proportion to its rate. Monte Carlo drivers derive run `k`'s seed as
//! `master_seed + k` and aggregate by run index, so results do not depend on
//! scheduling. [`exact_master_equation`] integrates the full Kolmogorov
//! forward equation on `2^N` configurations for small graphs.

mod estimate;
mod master;
mod population;
mod ssa;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SpectralError;
use crate::meanfield::{Compartment, MeanFieldError};

pub use estimate::{
    default_t_cap, estimate_extinction_time, estimate_marginals, extinction_time_bound,
    ExtinctionEstimate, Marginals,
};
pub use master::{exact_master_equation, MasterSolution, MAX_MASTER_NODES};
pub use population::{ssa_population, PopulationCounts, PopulationModel, PopulationOutcome};
pub use ssa::{ssa_network_sis, NetworkSsa, SsaOptions};

#[derive(Debug, Error, PartialEq)]
pub enum StochasticError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("node {node} starts in {state:?}; SIS simulation only uses S and I")]
    BadInitialState { node: usize, state: Compartment },
    #[error("initial counts sum to {sum}, expected N = {n}")]
    BadCounts { sum: usize, n: usize },
    #[error("all {runs} runs hit the time cap {t_cap}; no extinction time available")]
    AllCensored { runs: usize, t_cap: f64 },
    #[error("master equation needs 2^n states; n = {n} exceeds the limit {max}")]
    TooLarge { n: usize, max: usize },
    #[error("probability mass drifted to {mass} at t = {time}")]
    MassDrift { time: f64, mass: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] MeanFieldError),
}

/// One state change of one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub node: usize,
    pub from: Compartment,
    pub to: Compartment,
}

/// Result of one simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Empty unless event recording was requested.
    pub events: Vec<Event>,
    pub event_count: usize,
    /// Time the all-healthy state was reached; `None` when censored.
    pub absorption_time: Option<f64>,
    pub censored: bool,
    pub final_state: Vec<Compartment>,
    pub seed: u64,
}

/// CSV `time,node,from,to`.
pub fn events_to_csv(events: &[Event]) -> String {
    let mut out = String::from("time,node,from,to\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            crate::meanfield::format_sig(e.time),
            e.node,
            e.from.label(),
            e.to.label()
        );
    }
    out
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<(), StochasticError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(StochasticError::InvalidParameter {
            name: name.to_string(),
            value: v,
            reason: "must be positive and finite",
        })
    }
}
