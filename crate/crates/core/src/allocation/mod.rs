//! Spectral threshold checks and budget-constrained rate allocation.
//!
//! Each node `i` has an infection rate `β_i` (applied to all its incoming
//! links, `β_ij = β_i a_ij`) and a recovery rate `δ_i`, both boxed. Lowering
//! `β_i` below `β̄_i` or raising `δ_i` above `δ̲_i` costs money; the goal is to
//! minimise the decay rate `λmax(B − D)` subject to a total budget `C`.
//!
//! With `δ̃_i = φ − δ_i` and `φ > max δ̄_i`, the matrix `B + Δ̃ = B − D + φI` is
//! nonnegative and the problem becomes the geometric program
//!
//! ```text
//! minimise λ  s.t.  Σ_j a_ij β_i u_j + δ̃_i u_i ≤ λ u_i,
//!                   Σ_i f_i(β_i) + g̃_i(δ̃_i) ≤ C,  boxes on β_i and δ̃_i,
//! ```
//!
//! whose optimum gives `λmax(B* − D*) = λ* − φ`. [`solve_allocation`] builds
//! the program ([`build_gp`]) and solves it with an interior-point method
//! ([`solve_gp`]); [`brute_force_allocation`] is a grid-search cross-check for
//! tiny instances.

mod brute;
mod gp;
mod posynomial;
mod threshold;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{lambda_max, Graph, SpectralError};
use crate::meanfield::{MeanFieldError, RateModel};

pub use brute::{
    brute_force_allocation, BruteForceResult, MAX_BRUTE_FORCE_DENSITY, MAX_BRUTE_FORCE_NODES,
};
pub use gp::{
    build_gp, solve_gp, ConstraintKind, GeometricProgram, GpDiagnostics, GpOptions, GpSolution,
    GpVar,
};
pub use posynomial::{Monomial, Posynomial};
pub use threshold::{check_threshold, ThresholdCheck, Verdict};

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },
    #[error("cost curve `{name}` cannot be written as a posynomial plus a constant: {reason}")]
    NotExpressible { name: String, reason: &'static str },
    #[error("not a posynomial: {0}")]
    NotPosynomial(String),
    #[error("budget {budget} is below the zero-spend cost {zero_spend}")]
    ZeroSpendInfeasible { budget: f64, zero_spend: f64 },
    #[error(
        "starting point is not strictly feasible: constraint {constraint} evaluates to {value}"
    )]
    InfeasibleStart { constraint: usize, value: f64 },
    #[error("{what} = {value} exceeds the limit {max}")]
    TooLarge {
        what: &'static str,
        value: usize,
        max: usize,
    },
    #[error("Newton iteration did not converge at barrier weight {t:e} after {iterations} steps (decrement {decrement:e})")]
    NoConvergence {
        t: f64,
        iterations: usize,
        decrement: f64,
    },
    #[error("recomputed decay rate {lambda_max} exceeds the certified bound {bound}")]
    DecayViolation { lambda_max: f64, bound: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] MeanFieldError),
}

/// Spending curve on one GP variable `x` (either `β_i` or `δ̃_i = φ − δ_i`).
///
/// Both curves decrease in `x`, so moving `β_i` down or `δ_i` up costs more,
/// and both are normalised to cost nothing at the zero-spend point `x_0`
/// (`β̄_i`, resp. `φ − δ̲_i`): `cost(x) = s (x^{−a} − x_0^{−a})`. The constant
/// is moved to the right-hand side of the budget constraint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostCurve {
    /// Free control.
    Zero,
    /// `s (1/x − 1/x_0)`.
    InverseLinear { scale: f64 },
    /// `s (x^{−a} − x_0^{−a})`, `a > 0`.
    Power { scale: f64, exponent: f64 },
}

impl CostCurve {
    /// `(s, a)`, or `None` when the control is free.
    fn terms(&self) -> Option<(f64, f64)> {
        match *self {
            CostCurve::Zero => None,
            CostCurve::InverseLinear { scale } => Some((scale, 1.0)),
            CostCurve::Power { scale, exponent } => Some((scale, exponent)),
        }
        .filter(|&(s, _)| s != 0.0)
    }

    pub fn is_free(&self) -> bool {
        self.terms().is_none()
    }

    pub fn cost(&self, x: f64, x0: f64) -> f64 {
        match self.terms() {
            None => 0.0,
            Some((s, a)) => s * (x.powf(-a) - x0.powf(-a)),
        }
    }

    /// The `x` at which `cost(x) = spend`, for `spend ≥ 0`.
    pub fn inverse(&self, spend: f64, x0: f64) -> Option<f64> {
        let (s, a) = self.terms()?;
        Some((spend / s + x0.powf(-a)).powf(-1.0 / a))
    }

    fn validate(&self, name: &str) -> Result<(), AllocationError> {
        let bad = |reason| {
            Err(AllocationError::NotExpressible {
                name: name.to_string(),
                reason,
            })
        };
        match *self {
            CostCurve::Zero => Ok(()),
            CostCurve::InverseLinear { scale } | CostCurve::Power { scale, .. }
                if !(scale >= 0.0 && scale.is_finite()) =>
            {
                bad("scale must be finite and nonnegative")
            }
            CostCurve::Power { exponent, .. } if !(exponent > 0.0 && exponent.is_finite()) => {
                bad("exponent must be finite and positive")
            }
            _ => Ok(()),
        }
    }
}

/// Budget-constrained choice of per-node `β_i ∈ [β̲_i, β̄_i]` and
/// `δ_i ∈ [δ̲_i, δ̄_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub graph: Graph,
    pub beta_min: Vec<f64>,
    pub beta_max: Vec<f64>,
    pub delta_min: Vec<f64>,
    pub delta_max: Vec<f64>,
    /// Cost of lowering `β_i`, as a curve in `β_i`.
    pub beta_cost: Vec<CostCurve>,
    /// Cost of raising `δ_i`, as a curve in `δ̃_i = φ − δ_i`.
    pub delta_cost: Vec<CostCurve>,
    pub budget: f64,
}

impl AllocationProblem {
    /// Same bounds and cost curves at every node.
    pub fn uniform(
        graph: Graph,
        beta_bounds: (f64, f64),
        delta_bounds: (f64, f64),
        beta_cost: CostCurve,
        delta_cost: CostCurve,
        budget: f64,
    ) -> Self {
        let n = graph.node_count();
        Self {
            graph,
            beta_min: vec![beta_bounds.0; n],
            beta_max: vec![beta_bounds.1; n],
            delta_min: vec![delta_bounds.0; n],
            delta_max: vec![delta_bounds.1; n],
            beta_cost: vec![beta_cost; n],
            delta_cost: vec![delta_cost; n],
            budget,
        }
    }

    pub fn n(&self) -> usize {
        self.graph.node_count()
    }

    /// `φ = max δ̄_i + 1`.
    pub fn phi(&self) -> f64 {
        self.delta_max
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            + 1.0
    }

    pub fn validate(&self) -> Result<(), AllocationError> {
        let n = self.n();
        for (what, len) in [
            ("beta_min", self.beta_min.len()),
            ("beta_max", self.beta_max.len()),
            ("delta_min", self.delta_min.len()),
            ("delta_max", self.delta_max.len()),
            ("beta_cost", self.beta_cost.len()),
            ("delta_cost", self.delta_cost.len()),
        ] {
            if len != n {
                return Err(AllocationError::Dimension {
                    what: what.into(),
                    expected: n,
                    got: len,
                });
            }
        }
        for i in 0..n {
            check_box("beta", i, self.beta_min[i], self.beta_max[i])?;
            check_box("delta", i, self.delta_min[i], self.delta_max[i])?;
            self.beta_cost[i].validate(&format!("beta_cost[{i}]"))?;
            self.delta_cost[i].validate(&format!("delta_cost[{i}]"))?;
        }
        if !self.budget.is_finite() {
            return Err(AllocationError::InvalidParameter {
                name: "budget".into(),
                value: self.budget,
                reason: "must be finite",
            });
        }
        if self.budget < 0.0 {
            return Err(AllocationError::ZeroSpendInfeasible {
                budget: self.budget,
                zero_spend: 0.0,
            });
        }
        Ok(())
    }

    /// `(β̄, δ̲)`: no money spent.
    pub fn zero_spend(&self) -> (Vec<f64>, Vec<f64>) {
        (self.beta_max.clone(), self.delta_min.clone())
    }

    /// `(β̲, δ̄)`: every control at its most effective bound.
    pub fn full_spend(&self) -> (Vec<f64>, Vec<f64>) {
        (self.beta_min.clone(), self.delta_max.clone())
    }

    /// Total cost of an allocation.
    pub fn spend(&self, beta: &[f64], delta: &[f64]) -> f64 {
        let phi = self.phi();
        (0..self.n())
            .map(|i| {
                self.beta_cost[i].cost(beta[i], self.beta_max[i])
                    + self.delta_cost[i].cost(phi - delta[i], phi - self.delta_min[i])
            })
            .sum()
    }

    /// `B − D` for the given rates.
    pub fn metzler(&self, beta: &[f64], delta: &[f64]) -> DMatrix<f64> {
        let mut m = self.graph.adjacency();
        for i in 0..self.n() {
            for j in 0..self.n() {
                m[(i, j)] *= beta[i];
            }
            m[(i, i)] -= delta[i];
        }
        m
    }
}

fn check_box(what: &str, i: usize, lo: f64, hi: f64) -> Result<(), AllocationError> {
    let fail = |value, reason| {
        Err(AllocationError::InvalidParameter {
            name: format!("{what}[{i}]"),
            value,
            reason,
        })
    };
    if !(lo > 0.0 && lo.is_finite()) {
        return fail(lo, "lower bound must be finite and positive");
    }
    if !(hi >= lo && hi.is_finite()) {
        return fail(
            hi,
            "upper bound must be finite and at least the lower bound",
        );
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    /// Optimal GP objective.
    pub lambda_star: f64,
    pub phi: f64,
    /// `λmax(B* − D*)`, recomputed from the returned rates.
    pub lambda_max: f64,
    pub spend: f64,
    /// Eigen-surrogate vector, scaled to sum to `n`.
    pub u: Vec<f64>,
    pub diagnostics: GpDiagnostics,
}

/// Solves the allocation problem through its geometric program.
pub fn solve_allocation(problem: &AllocationProblem) -> Result<AllocationResult, AllocationError> {
    solve_allocation_with(problem, &GpOptions::default())
}

pub fn solve_allocation_with(
    problem: &AllocationProblem,
    opts: &GpOptions,
) -> Result<AllocationResult, AllocationError> {
    let gp = build_gp(problem)?;
    let start = interior_start(problem, &gp)?;
    let sol = solve_gp(&gp, &start, opts)?;
    let phi = gp.phi;
    let value = |v: &GpVar| match *v {
        GpVar::Free(k) => sol.x[k],
        GpVar::Fixed(c) => c,
    };
    // fixed controls are always at their zero-spend value; copy it rather
    // than round-trip through φ − δ̃
    let beta: Vec<f64> = gp.beta.iter().map(value).collect();
    let delta: Vec<f64> = gp
        .delta_tilde
        .iter()
        .zip(&problem.delta_min)
        .map(|(v, &lo)| match v {
            GpVar::Free(_) => phi - value(v),
            GpVar::Fixed(_) => lo,
        })
        .collect();
    let mut u: Vec<f64> = gp.u.iter().map(|&k| sol.x[k]).collect();
    let total: f64 = u.iter().sum();
    let n = u.len() as f64;
    u.iter_mut().for_each(|x| *x *= n / total);
    let lambda_max = lambda_max(&problem.metzler(&beta, &delta))?.lambda_max;
    Ok(AllocationResult {
        spend: problem.spend(&beta, &delta),
        beta,
        delta,
        lambda_star: sol.x[gp.lambda],
        phi,
        lambda_max,
        u,
        diagnostics: sol.diagnostics,
    })
}

/// Strictly feasible point: controls pulled a little way in from the
/// zero-spend corner until at most half the budget is used, `u` the Perron
/// vector of the resulting `B + Δ̃`, and `λ` 5% above the tightest ratio.
fn interior_start(
    problem: &AllocationProblem,
    gp: &GeometricProgram,
) -> Result<Vec<f64>, AllocationError> {
    let n = problem.n();
    let phi = gp.phi;
    let mut x = vec![0.0; gp.arity];
    let mut eps: f64 = 0.5;
    loop {
        let mut spend = 0.0;
        for i in 0..n {
            if let GpVar::Free(k) = gp.beta[i] {
                let (lo, hi) = (problem.beta_min[i], problem.beta_max[i]);
                let frac = if problem.beta_cost[i].is_free() {
                    0.5
                } else {
                    eps
                };
                x[k] = hi - frac * (hi - lo);
                spend += problem.beta_cost[i].cost(x[k], hi);
            }
            if let GpVar::Free(k) = gp.delta_tilde[i] {
                let (lo, hi) = (phi - problem.delta_max[i], phi - problem.delta_min[i]);
                let frac = if problem.delta_cost[i].is_free() {
                    0.5
                } else {
                    eps
                };
                x[k] = hi - frac * (hi - lo);
                spend += problem.delta_cost[i].cost(x[k], hi);
            }
        }
        if spend <= 0.5 * problem.budget || eps < 1e-300 {
            break;
        }
        eps *= 0.5;
    }
    let value = |v: &GpVar, x: &[f64]| match *v {
        GpVar::Free(k) => x[k],
        GpVar::Fixed(c) => c,
    };
    let a = problem.graph.adjacency();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let b = value(&gp.beta[i], &x);
        for j in 0..n {
            m[(i, j)] = a[(i, j)] * b;
        }
        m[(i, i)] += value(&gp.delta_tilde[i], &x);
    }
    let perron = lambda_max(&m)?;
    let top = perron.right_vector.iter().fold(0.0f64, |a, &b| a.max(b));
    let u = DVector::from_iterator(
        n,
        perron.right_vector.iter().map(|&v| v.max(0.0) + 1e-3 * top),
    );
    let mu = &m * &u;
    let ratio = (0..n).map(|i| mu[i] / u[i]).fold(0.0f64, f64::max);
    let log_mean = u.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
    for (i, &k) in gp.u.iter().enumerate() {
        x[k] = (u[i].ln() - log_mean).exp();
    }
    x[gp.lambda] = 1.05 * ratio;
    Ok(x)
}

/// `λmax(B* − D*)` for a solved allocation, checked against the certified
/// bound `λ* − φ`.
pub fn decay_rate(result: &AllocationResult, g: &Graph) -> Result<f64, AllocationError> {
    let rates = RateModel::node_infection(g, &result.beta, &result.delta)?;
    let lambda = lambda_max(&rates.metzler())?.lambda_max;
    let bound = result.lambda_star - result.phi;
    if lambda > bound + 1e-6 {
        return Err(AllocationError::DecayViolation {
            lambda_max: lambda,
            bound,
        });
    }
    Ok(lambda)
}
