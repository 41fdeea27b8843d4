//! Count-level population chains under mass action.
//!
//! SIS: `N^I → N^I + 1` at rate `β N^I N^S`, `N^I → N^I − 1` at `δ N^I`.
//! SIR: infection `(N^S − 1, N^I + 1)` at `β N^I N^S`, removal
//! `(N^I − 1, N^R + 1)` at `δ N^I`.

use serde::{Deserialize, Serialize};

use super::{check_positive, SsaOptions, StochasticError};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationModel {
    Sis,
    Sir,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationCounts {
    pub s: usize,
    pub i: usize,
    pub r: usize,
}

impl PopulationCounts {
    pub fn total(&self) -> usize {
        self.s + self.i + self.r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationOutcome {
    pub absorption_time: Option<f64>,
    pub censored: bool,
    pub final_counts: PopulationCounts,
    pub jumps: usize,
    /// `(time, counts)` after every jump, starting with `(0, counts0)`;
    /// empty unless event recording was requested.
    pub path: Vec<(f64, PopulationCounts)>,
    pub seed: u64,
}

pub fn ssa_population(
    model: PopulationModel,
    n: usize,
    beta: f64,
    delta: f64,
    counts0: PopulationCounts,
    seed: u64,
    opts: &SsaOptions,
) -> Result<PopulationOutcome, StochasticError> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(StochasticError::InvalidParameter {
            name: "beta".into(),
            value: beta,
            reason: "must be finite and nonnegative",
        });
    }
    check_positive("delta", delta)?;
    check_positive("t_cap", opts.t_cap)?;
    if counts0.total() != n {
        return Err(StochasticError::BadCounts {
            sum: counts0.total(),
            n,
        });
    }
    if model == PopulationModel::Sis && counts0.r != 0 {
        return Err(StochasticError::InvalidParameter {
            name: "counts0.r".into(),
            value: counts0.r as f64,
            reason: "SIS has no removed compartment",
        });
    }

    let mut rng = SimRng::new(seed);
    let mut c = counts0;
    let mut t = 0.0;
    let mut jumps = 0;
    let mut path = Vec::new();
    if opts.record_events {
        path.push((0.0, c));
    }
    loop {
        if c.i == 0 {
            return Ok(PopulationOutcome {
                absorption_time: Some(t),
                censored: false,
                final_counts: c,
                jumps,
                path,
                seed,
            });
        }
        let up = beta * c.i as f64 * c.s as f64;
        let down = delta * c.i as f64;
        let total = up + down;
        let t_new = t + rng.exponential(total);
        if t_new > opts.t_cap {
            return Ok(PopulationOutcome {
                absorption_time: None,
                censored: true,
                final_counts: c,
                jumps,
                path,
                seed,
            });
        }
        t = t_new;
        if rng.open_unit() * total < up {
            c.s -= 1;
            c.i += 1;
        } else {
            c.i -= 1;
            match model {
                PopulationModel::Sis => c.s += 1,
                PopulationModel::Sir => c.r += 1,
            }
        }
        jumps += 1;
        if opts.record_events {
            path.push((t, c));
        }
    }
}
