//! Population SIS with a treatment switch `u ∈ [0, 1]` that moves the
//! recovery rate from `δ₁` to `δ₂`.

use serde::{Deserialize, Serialize};

use super::{
    check_horizon, check_weight, forward_backward_sweep, simulate, ControlError, ControlledSystem,
    FbsOptions, FbsResult, PolicySchedule,
};
use crate::meanfield::{Compartment, StateLayout, Trajectory};

/// Minimise `J_T = ∫₀ᵀ (c p + d u) dt` subject to
/// `ṗ = β p (1 − p) − ((1 − u) δ₁ + u δ₂) p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationControl {
    pub beta: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Cost per unit of infection.
    pub c: f64,
    /// Cost per unit of treatment.
    pub d: f64,
    pub horizon: f64,
}

impl PopulationControl {
    pub fn validate(&self) -> Result<(), ControlError> {
        check_horizon(self.horizon)?;
        check_weight("beta", self.beta)?;
        check_weight("c", self.c)?;
        check_weight("d", self.d)?;
        if !(self.delta1 > 0.0 && self.delta1.is_finite()) {
            return Err(ControlError::InvalidParameter {
                name: "delta1".into(),
                value: self.delta1,
                reason: "must be positive",
            });
        }
        if !(self.delta2 > self.delta1 && self.delta2.is_finite()) {
            return Err(ControlError::InvalidParameter {
                name: "delta2".into(),
                value: self.delta2,
                reason: "treatment must raise the recovery rate",
            });
        }
        Ok(())
    }

    pub fn system(&self) -> Result<PopulationSystem, ControlError> {
        PopulationSystem::new(self.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Treat everyone from the start, then stop for good.
    TreatThenStop,
    /// Never treat.
    NeverTreat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    pub kind: PolicyKind,
    /// `β / (δ₂ − δ₁)`.
    pub ratio: f64,
    /// `c / d` (infinite when treatment is free).
    pub threshold: f64,
    /// The two are equal and either branch may be optimal.
    pub degenerate: bool,
}

/// Compares `β / (δ₂ − δ₁)` with `c / d`: treat first when the former is
/// smaller.
pub fn classify_population_policy(p: &PopulationControl) -> Result<PolicyClass, ControlError> {
    p.validate()?;
    let ratio = p.beta / (p.delta2 - p.delta1);
    let threshold = if p.d == 0.0 { f64::INFINITY } else { p.c / p.d };
    let degenerate =
        threshold.is_finite() && (ratio - threshold).abs() <= 1e-12 * ratio.abs().max(threshold);
    let kind = if ratio < threshold && !degenerate {
        PolicyKind::TreatThenStop
    } else {
        PolicyKind::NeverTreat
    };
    Ok(PolicyClass {
        kind,
        ratio,
        threshold,
        degenerate,
    })
}

#[derive(Clone, Debug)]
pub struct PopulationSystem {
    problem: PopulationControl,
    layout: StateLayout,
    lower: [f64; 1],
    upper: [f64; 1],
}

impl PopulationSystem {
    pub fn new(problem: PopulationControl) -> Result<Self, ControlError> {
        problem.validate()?;
        Ok(Self {
            problem,
            layout: StateLayout::new(&[Compartment::I], 1, false),
            lower: [0.0],
            upper: [1.0],
        })
    }

    pub fn problem(&self) -> &PopulationControl {
        &self.problem
    }

    fn recovery(&self, u: f64) -> f64 {
        (1.0 - u) * self.problem.delta1 + u * self.problem.delta2
    }
}

impl ControlledSystem for PopulationSystem {
    fn name(&self) -> &str {
        "population_sis_control"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn signal(&self) -> &str {
        "u"
    }
    fn horizon(&self) -> f64 {
        self.problem.horizon
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let p = x[0];
        dx[0] = self.problem.beta * p * (1.0 - p) - self.recovery(u[0]) * p;
    }
    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.problem.c * x[0] + self.problem.d * u[0]
    }
    // ψ here is the negated Hamiltonian multiplier, so that the switching
    // function reads f = ψ p (δ₂ − δ₁) + d.
    fn costate_rhs(&self, x: &[f64], u: &[f64], lam: &[f64], dlam: &mut [f64]) {
        let p = x[0];
        dlam[0] =
            self.problem.c - lam[0] * (self.problem.beta * (1.0 - 2.0 * p) - self.recovery(u[0]));
    }
    fn switching(&self, x: &[f64], lam: &[f64], sigma: &mut [f64]) {
        sigma[0] = lam[0] * x[0] * (self.problem.delta2 - self.problem.delta1) + self.problem.d;
    }
}

fn check_p0(p0: f64) -> Result<(), ControlError> {
    if p0 > 0.0 && p0 <= 1.0 {
        Ok(())
    } else {
        Err(ControlError::InvalidParameter {
            name: "p0".into(),
            value: p0,
            reason: "must lie in (0, 1]",
        })
    }
}

/// Forward-backward sweep for the population treatment problem.
pub fn fbs_population_sis(
    problem: &PopulationControl,
    p0: f64,
    opts: &FbsOptions,
) -> Result<FbsResult, ControlError> {
    check_p0(p0)?;
    let sys = PopulationSystem::new(problem.clone())?;
    forward_backward_sweep(&sys, &[p0], opts)
}

/// Integrates the controlled population model under `schedule` with the
/// default step of 1e-3, aligned to its breakpoints.
pub fn simulate_controlled_population(
    beta: f64,
    delta1: f64,
    delta2: f64,
    schedule: &PolicySchedule,
    p0: f64,
    horizon: f64,
) -> Result<Trajectory, ControlError> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(ControlError::InvalidParameter {
            name: "p0".into(),
            value: p0,
            reason: "must lie in [0, 1]",
        });
    }
    if schedule
        .lower
        .iter()
        .chain(&schedule.upper)
        .any(|b| !(0.0..=1.0).contains(b))
    {
        return Err(ControlError::Schedule(
            "treatment bounds must lie within [0, 1]".into(),
        ));
    }
    // the costs play no part in the dynamics
    let sys = PopulationSystem::new(PopulationControl {
        beta,
        delta1,
        delta2,
        c: 0.0,
        d: 0.0,
        horizon,
    })?;
    let mut sched = schedule.clone();
    sched.lower = vec![0.0];
    sched.upper = vec![1.0];
    simulate(&sys, &[p0], &sched, FbsOptions::default().dt)
}
