//! Monte Carlo estimators built on [`NetworkSsa`].

use serde::{Deserialize, Serialize};

use super::ssa::initial_infected;
use super::{check_positive, NetworkSsa, SsaOptions, StochasticError};
use crate::graph::{lambda_max, Graph};
use crate::meanfield::{Compartment, RateModel};
use crate::parallel::map_range;
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionEstimate {
    /// Mean over runs that went extinct before the cap.
    pub mean: f64,
    /// `None` when fewer than two runs completed.
    pub std_error: Option<f64>,
    pub completed: usize,
    pub censored: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub t_cap: f64,
}

/// `10 (ln N + 1) / δ̄` with `δ̄` the mean recovery rate.
pub fn default_t_cap(rates: &RateModel) -> f64 {
    let n = rates.n() as f64;
    let mean_delta = rates.delta().iter().sum::<f64>() / n;
    10.0 * (n.ln() + 1.0) / mean_delta
}

/// Mean extinction time over `runs` independent runs seeded `master_seed + k`.
/// Censored runs are counted but never averaged in.
pub fn estimate_extinction_time(
    rates: &RateModel,
    x0: &[Compartment],
    runs: usize,
    master_seed: u64,
    t_cap: Option<f64>,
) -> Result<ExtinctionEstimate, StochasticError> {
    if runs == 0 {
        return Err(StochasticError::InvalidParameter {
            name: "runs".into(),
            value: 0.0,
            reason: "need at least one run",
        });
    }
    let t_cap = t_cap.unwrap_or_else(|| default_t_cap(rates));
    check_positive("t_cap", t_cap)?;
    let x = initial_infected(x0, rates.n())?;
    let sim = NetworkSsa::new(rates);
    let opts = SsaOptions {
        t_cap,
        record_events: false,
    };
    let times = map_range(runs, |k| {
        sim.run(&x, SimRng::derive_seed(master_seed, k), &opts)
            .absorption_time
    });
    let done: Vec<f64> = times.iter().flatten().copied().collect();
    let censored = runs - done.len();
    if done.is_empty() {
        return Err(StochasticError::AllCensored { runs, t_cap });
    }
    let (mean, std_error) = mean_and_se(&done);
    Ok(ExtinctionEstimate {
        mean,
        std_error,
        completed: done.len(),
        censored,
        runs,
        master_seed,
        t_cap,
    })
}

/// Sample mean and standard error of the mean (`None` for a single sample).
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Upper bound `(ln N + 1) / (δ − β λmax(A))` on the expected extinction time,
/// valid only for `β/δ < 1/λmax(A)`; `None` otherwise.
pub fn extinction_time_bound(
    g: &Graph,
    beta: f64,
    delta: f64,
) -> Result<Option<f64>, StochasticError> {
    check_positive("delta", delta)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(StochasticError::InvalidParameter {
            name: "beta".into(),
            value: beta,
            reason: "must be finite and nonnegative",
        });
    }
    let lambda = lambda_max(&g.adjacency())?.lambda_max;
    let gap = delta - beta * lambda;
    if gap <= 1e-12 * delta {
        return Ok(None);
    }
    Ok(Some(((g.node_count() as f64).ln() + 1.0) / gap))
}

/// Empirical `P(X_i(t) = I)` at each sample time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub times: Vec<f64>,
    /// `mean[k][i]` at `times[k]`, node `i`.
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub runs: usize,
    pub master_seed: u64,
}

const MARGINAL_CHUNK: usize = 256;

pub fn estimate_marginals(
    rates: &RateModel,
    x0: &[Compartment],
    sample_times: &[f64],
    runs: usize,
    master_seed: u64,
) -> Result<Marginals, StochasticError> {
    if runs == 0 {
        return Err(StochasticError::InvalidParameter {
            name: "runs".into(),
            value: 0.0,
            reason: "need at least one run",
        });
    }
    for (k, &t) in sample_times.iter().enumerate() {
        let ok = t >= 0.0 && t.is_finite() && (k == 0 || t > sample_times[k - 1]);
        if !ok {
            return Err(StochasticError::InvalidParameter {
                name: format!("sample_times[{k}]"),
                value: t,
                reason: "sample times must be finite, nonnegative and increasing",
            });
        }
    }
    let n = rates.n();
    let x = initial_infected(x0, n)?;
    let sim = NetworkSsa::new(rates);
    let opts = SsaOptions {
        t_cap: sample_times.last().copied().unwrap_or(0.0),
        record_events: false,
    };
    let m = sample_times.len();
    let chunks = runs.div_ceil(MARGINAL_CHUNK);
    let partial = map_range(chunks, |c| {
        let mut counts = vec![vec![0u64; n]; m];
        let mut snaps = Vec::with_capacity(m);
        for k in c * MARGINAL_CHUNK..((c + 1) * MARGINAL_CHUNK).min(runs) {
            snaps.clear();
            sim.run_sampled(
                &x,
                SimRng::derive_seed(master_seed, k),
                &opts,
                sample_times,
                &mut snaps,
            );
            for (row, snap) in counts.iter_mut().zip(&snaps) {
                for (cnt, &inf) in row.iter_mut().zip(snap) {
                    *cnt += u64::from(inf);
                }
            }
        }
        counts
    });
    let mut counts = vec![vec![0u64; n]; m];
    for part in partial {
        for (row, prow) in counts.iter_mut().zip(part) {
            for (a, b) in row.iter_mut().zip(prow) {
                *a += b;
            }
        }
    }
    let r = runs as f64;
    let mean: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / r).collect())
        .collect();
    let std_error = mean
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    if runs < 2 {
                        0.0
                    } else {
                        (p * (1.0 - p) / (r - 1.0)).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    Ok(Marginals {
        times: sample_times.to_vec(),
        mean,
        std_error,
        runs,
        master_seed,
    })
}
