//! Endemic equilibrium of the heterogeneous network SIS model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{rhs_network_sis, MeanFieldError, RateModel};
use crate::graph::lambda_max;
use crate::linalg::{max_abs, solve};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Equilibrium {
    /// `λmax(B − D) ≤ 0`: the origin is the only equilibrium and attracts everything.
    DiseaseFree { lambda: f64 },
    Endemic {
        p: Vec<f64>,
        lambda: f64,
        residual: f64,
        iterations: usize,
    },
}

impl Equilibrium {
    pub fn is_endemic(&self) -> bool {
        matches!(self, Equilibrium::Endemic { .. })
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Equilibrium::DiseaseFree { lambda } | Equilibrium::Endemic { lambda, .. } => lambda,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iterations: usize,
    /// Required `‖ṗ‖∞` at the returned point.
    pub residual_tol: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            max_iterations: 100_000,
            residual_tol: 1e-10,
        }
    }
}

/// Damped fixed point `p_i ← (1−ω) p_i + ω s_i / (δ_i + s_i)`, `s_i = Σ_j β_ij p_j`,
/// started from `p = ½·1`. The map is monotone and its positive fixed points
/// are exactly the nonzero equilibria. If the damped iteration stalls short
/// of the residual target (slow near the threshold) a few Newton steps on the
/// vector field finish the job.
pub fn endemic_equilibrium(rates: &RateModel) -> Result<Equilibrium, MeanFieldError> {
    endemic_equilibrium_with(rates, &EquilibriumOptions::default())
}

pub fn endemic_equilibrium_with(
    rates: &RateModel,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium, MeanFieldError> {
    if !rates.is_strongly_connected() {
        return Err(MeanFieldError::NotStronglyConnected);
    }
    let lambda = lambda_max(&rates.metzler())?.lambda_max;
    let scale = rates.delta().iter().fold(1.0f64, |a, &d| a.max(d));
    if lambda <= 1e-12 * scale {
        return Ok(Equilibrium::DiseaseFree { lambda });
    }

    let n = rates.n();
    let w = opts.damping;
    let mut p = vec![0.5; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut change = 0.0f64;
        for i in 0..n {
            let s = rates.pressure(i, &p);
            let target = s / (rates.delta()[i] + s);
            next[i] = (1.0 - w) * p[i] + w * target;
            change = change.max((next[i] - p[i]).abs());
        }
        std::mem::swap(&mut p, &mut next);
        if change <= opts.tol {
            break;
        }
    }

    let mut residual = max_abs(&rhs_network_sis(&p, rates)?);
    if residual > opts.residual_tol {
        if let Some((q, r)) = newton_polish(rates, &p) {
            if r < residual {
                p = q;
                residual = r;
            }
        }
    }
    if residual > opts.residual_tol || p.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(MeanFieldError::NoConvergence {
            iterations,
            residual,
        });
    }
    Ok(Equilibrium::Endemic {
        p,
        lambda,
        residual,
        iterations,
    })
}

fn newton_polish(rates: &RateModel, p0: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = rates.n();
    let mut p = p0.to_vec();
    let mut res = max_abs(&rhs_network_sis(&p, rates).ok()?);
    for _ in 0..20 {
        let f = rhs_network_sis(&p, rates).ok()?;
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            let s = rates.pressure(i, &p);
            for &(k, b) in rates.incoming(i) {
                j[(i, k)] = (1.0 - p[i]) * b;
            }
            j[(i, i)] = -rates.delta()[i] - s;
        }
        let step = solve(j, &(-DVector::from_vec(f)))?;
        let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
        if q.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            break;
        }
        let r = max_abs(&rhs_network_sis(&q, rates).ok()?);
        if r >= res {
            break;
        }
        p = q;
        res = r;
    }
    Some((p, res))
}
