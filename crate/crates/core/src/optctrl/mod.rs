//! Optimal control of epidemic models by forward-backward sweep.
//!
//! A [`ControlledSystem`] bundles dynamics `ẋ = F(x, u)`, a running cost
//! `L(x, u)`, the costate equation of Pontryagin's principle and a switching
//! function `σ(x, λ)` whose sign picks the control: the upper bound where
//! `σ < 0`, the lower bound where `σ > 0`. Everything is linear in `u`, so
//! the optimal controls are bang-bang.
//!
//! [`forward_backward_sweep`] works on a uniform grid with one control value
//! per cell. Each sweep integrates the state forward (RK4), the costate
//! backward from `λ(T) = 0` (RK4, with cubic Hermite state interpolation at
//! the half steps) and replaces each cell's control by the exact cell average
//! of the bang-bang law, taking `σ` linear across the cell. That average is a
//! continuous function of `σ`, which keeps the relaxed update
//! `u ← (1 − ω) u + ω u_new` from chattering at a switch. Inside the
//! dead-band `|σ| ≤ 1e-8` the lower bound is used unless the system says
//! otherwise. The converged controls
//! are then snapped to exact bang-bang schedules and the snap is checked by
//! re-integration.

mod network;
mod population;
mod schedule;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::meanfield::{
    enforce_invariants, rk4_step, MeanFieldError, Rk4Workspace, StateLayout, Trajectory,
    VectorField,
};

pub use network::{
    fbs_sir_network, fbs_sis_network, SirNetworkControl, SirSystem, SisNetworkControl, SisSystem,
};
pub use population::{
    classify_population_policy, fbs_population_sis, simulate_controlled_population, PolicyClass,
    PolicyKind, PopulationControl, PopulationSystem,
};
pub use schedule::PolicySchedule;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
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
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("breakpoint {time} lies outside the horizon [0, {horizon})")]
    BreakpointOutside { time: f64, horizon: f64 },
    #[error("schedule breakpoint {time} is not on the trajectory grid")]
    GridMismatch { time: f64 },
    #[error("forward-backward sweep did not converge in {iterations} iterations (last control change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error(transparent)]
    Model(#[from] MeanFieldError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Any of the supported control problems; network problems additionally
/// need a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ControlProblem {
    Population(PopulationControl),
    SirNetwork(SirNetworkControl),
    SisNetwork(SisNetworkControl),
}

impl ControlProblem {
    pub fn horizon(&self) -> f64 {
        match self {
            Self::Population(p) => p.horizon,
            Self::SirNetwork(p) => p.horizon,
            Self::SisNetwork(p) => p.horizon,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        match self {
            Self::Population(p) => p.validate(),
            Self::SirNetwork(p) => p.validate(),
            Self::SisNetwork(p) => p.validate(),
        }
    }
}

/// How converged sweep controls are turned into a bang-bang schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapMode {
    /// Switch wherever the switching function changes sign.
    SignChanges,
    /// Upper bound on `[0, τ)`, lower after, with `τ` preserving the time
    /// spent at the upper bound.
    SingleSwitch,
}

pub trait ControlledSystem {
    fn name(&self) -> &str;
    fn layout(&self) -> &StateLayout;
    /// CSV column prefix of the control signals.
    fn signal(&self) -> &str;
    fn horizon(&self) -> f64;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64;
    /// `λ̇` along the state; the costate has the state's dimension.
    fn costate_rhs(&self, x: &[f64], u: &[f64], lam: &[f64], dlam: &mut [f64]);
    fn switching(&self, x: &[f64], lam: &[f64], sigma: &mut [f64]);
    fn snap_mode(&self) -> SnapMode {
        SnapMode::SignChanges
    }
    /// Whether `|σ_s|` inside the dead-band selects the upper bound instead
    /// of the lower one.
    fn tie_upper(&self, _signal: usize) -> bool {
        false
    }
    /// True when the sweep carries no optimality guarantee.
    fn heuristic(&self) -> bool {
        false
    }
}

/// Dynamics with the control frozen, for the shared RK4 stepper.
struct Frozen<'a, S: ?Sized> {
    sys: &'a S,
    u: &'a [f64],
}

impl<S: ControlledSystem + ?Sized> VectorField for Frozen<'_, S> {
    fn name(&self) -> &str {
        self.sys.name()
    }
    fn layout(&self) -> &StateLayout {
        self.sys.layout()
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        self.sys.dynamics(x, self.u, dx);
        Ok(())
    }
}

fn check_schedule<S: ControlledSystem + ?Sized>(
    sys: &S,
    schedule: &PolicySchedule,
) -> Result<(), ControlError> {
    schedule.validate()?;
    if schedule.signals() != sys.lower().len() {
        return Err(ControlError::Dimension {
            what: "schedule signals".into(),
            expected: sys.lower().len(),
            got: schedule.signals(),
        });
    }
    let t = sys.horizon();
    if (schedule.horizon - t).abs() > 1e-12 * t {
        return Err(ControlError::InvalidParameter {
            name: "schedule horizon".into(),
            value: schedule.horizon,
            reason: "must equal the problem horizon",
        });
    }
    Ok(())
}

/// Integrates the controlled dynamics with RK4, splitting every schedule
/// segment into steps of about `dt` so that breakpoints are grid points.
pub fn simulate<S: ControlledSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    schedule: &PolicySchedule,
    dt: f64,
) -> Result<Trajectory, ControlError> {
    check_schedule(sys, schedule)?;
    let layout = sys.layout().clone();
    if x0.len() != layout.len() {
        return Err(ControlError::Dimension {
            what: "initial state".into(),
            expected: layout.len(),
            got: x0.len(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::InvalidParameter {
            name: "dt".into(),
            value: dt,
            reason: "step must be positive",
        });
    }
    let mut x = x0.to_vec();
    enforce_invariants(&layout, 0.0, &mut x)?;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut ws = Rk4Workspace::new(x.len());
    let mut next = vec![0.0; x.len()];
    for k in 0..schedule.starts.len() {
        let a = schedule.starts[k];
        let b = schedule
            .starts
            .get(k + 1)
            .copied()
            .unwrap_or(schedule.horizon);
        let field = Frozen {
            sys,
            u: &schedule.values[k],
        };
        let steps = (((b - a) / dt).round() as usize).max(1);
        let h = (b - a) / steps as f64;
        for j in 0..steps {
            let t = a + j as f64 * h;
            rk4_step(&field, t, h, &x, &mut next, &mut ws)?;
            let t1 = if j + 1 == steps {
                b
            } else {
                a + (j + 1) as f64 * h
            };
            enforce_invariants(&layout, t1, &mut next)?;
            std::mem::swap(&mut x, &mut next);
            times.push(t1);
            states.push(x.clone());
        }
    }
    Ok(Trajectory {
        model: sys.name().to_string(),
        layout,
        times,
        states,
    })
}

/// `J_T = ∫₀ᵀ L(x, u) dt` by the composite trapezoid rule on the
/// trajectory's grid. The control is constant on every step, so each
/// breakpoint of the schedule has to be a grid point.
pub fn evaluate_objective<S: ControlledSystem + ?Sized>(
    sys: &S,
    schedule: &PolicySchedule,
    trajectory: &Trajectory,
) -> Result<f64, ControlError> {
    check_schedule(sys, schedule)?;
    let times = &trajectory.times;
    let t_end = sys.horizon();
    let tol = 1e-9 * t_end;
    if times.len() < 2 || times[0].abs() > tol || (times[times.len() - 1] - t_end).abs() > tol {
        return Err(ControlError::Schedule(
            "trajectory must span the whole horizon".into(),
        ));
    }
    for &b in schedule.breakpoints() {
        let k = times.partition_point(|&t| t < b - tol);
        if k >= times.len() || (times[k] - b).abs() > tol {
            return Err(ControlError::GridMismatch { time: b });
        }
    }
    let mut j = 0.0;
    for k in 0..times.len() - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let u = schedule.value_at(0.5 * (t0 + t1));
        let l0 = sys.running_cost(&trajectory.states[k], u);
        let l1 = sys.running_cost(&trajectory.states[k + 1], u);
        j += 0.5 * (t1 - t0) * (l0 + l1);
    }
    Ok(j)
}

#[derive(Clone, Debug)]
pub struct FbsOptions {
    /// Nominal grid step.
    pub dt: f64,
    /// Relaxation weight `ω`.
    pub relaxation: f64,
    /// Converged once no control moves by more than this in a sweep.
    pub tol: f64,
    pub max_iterations: usize,
    /// `|σ|` below this counts as zero, which selects the lower bound.
    pub dead_band: f64,
    /// Allowed relative change of `J_T` when snapping to bang-bang.
    pub snap_tol: f64,
}

impl Default for FbsOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            relaxation: 0.3,
            tol: 1e-6,
            max_iterations: 5000,
            dead_band: 1e-8,
            snap_tol: 1e-4,
        }
    }
}

/// Costate and switching function on the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostateTrajectory {
    pub times: Vec<f64>,
    pub costate: Vec<Vec<f64>>,
    pub switching: Vec<Vec<f64>>,
}

impl CostateTrajectory {
    /// `max |λ(T)|`.
    pub fn terminal_residual(&self) -> f64 {
        self.costate
            .last()
            .map_or(0.0, |l| l.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbsResult {
    /// Bang-bang schedule, or the relaxed one when snapping failed.
    pub schedule: PolicySchedule,
    /// `J_T` of `schedule`.
    pub objective: f64,
    /// `J_T` of the converged cell-averaged controls.
    pub relaxed_objective: f64,
    pub snapped: bool,
    pub iterations: usize,
    /// Ramp width `ε` the sweep fell back to, 0 for the pure bang-bang law.
    pub smoothing: f64,
    /// Value changes per signal.
    pub switches: Vec<usize>,
    pub costate: CostateTrajectory,
    /// State under `schedule`.
    pub trajectory: Trajectory,
    /// No optimality guarantee comes with this result.
    pub heuristic: bool,
}

/// Fraction of a cell on which the linear interpolant between `s0` and
/// `s1` lies below `−shift`.
fn cell_fraction(s0: f64, s1: f64, shift: f64) -> f64 {
    let (a, b) = (s0 + shift, s1 + shift);
    match (a < 0.0, b < 0.0) {
        (true, true) => 1.0,
        (false, false) => 0.0,
        (true, false) => a / (a - b),
        (false, true) => 1.0 - a / (a - b),
    }
}

/// Cell average of the ramp `clamp((ε − σ) / 2ε, 0, 1)` for `σ + shift`
/// linear between the two nodes; the ramp tends to the bang-bang law as
/// `ε → 0`.
fn cell_ramp(s0: f64, s1: f64, shift: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return cell_fraction(s0, s1, shift);
    }
    let ramp = |x: f64| ((eps - x) / (2.0 * eps)).clamp(0.0, 1.0);
    // antiderivative of the ramp, zero at −ε
    let prim = |x: f64| {
        if x <= -eps {
            x + eps
        } else if x >= eps {
            eps
        } else {
            (eps * x - 0.5 * x * x + 1.5 * eps * eps) / (2.0 * eps)
        }
    };
    let (a, b) = (s0 + shift, s1 + shift);
    if (b - a).abs() <= 1e-9 * eps {
        ramp(0.5 * (a + b))
    } else {
        ((prim(b) - prim(a)) / (b - a)).clamp(0.0, 1.0)
    }
}

struct Sweep<'a, S: ?Sized> {
    sys: &'a S,
    h: f64,
    cells: usize,
    x0: Vec<f64>,
    /// Per signal: `band` when the dead-band resolves to the lower bound,
    /// `−band` when it resolves to the upper one.
    shift: Vec<f64>,
}

impl<S: ControlledSystem + ?Sized> Sweep<'_, S> {
    fn control_into(&self, frac: &[f64], u: &mut [f64]) {
        let (lo, hi) = (self.sys.lower(), self.sys.upper());
        for (s, &a) in frac.iter().enumerate() {
            u[s] = if a >= 1.0 {
                hi[s]
            } else {
                lo[s] + a * (hi[s] - lo[s])
            };
        }
    }

    fn control(&self, frac: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.sys.lower(), self.sys.upper());
        frac.iter()
            .enumerate()
            .map(|(s, &a)| {
                if a >= 1.0 {
                    hi[s]
                } else {
                    lo[s] + a * (hi[s] - lo[s])
                }
            })
            .collect()
    }

    fn forward(&self, frac: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ControlError> {
        let layout = self.sys.layout();
        let mut u = vec![0.0; self.sys.lower().len()];
        let mut xs = Vec::with_capacity(self.cells + 1);
        let mut x = self.x0.clone();
        enforce_invariants(layout, 0.0, &mut x)?;
        xs.push(x.clone());
        let mut ws = Rk4Workspace::new(x.len());
        let mut next = vec![0.0; x.len()];
        for (k, f) in frac.iter().enumerate() {
            self.control_into(f, &mut u);
            let field = Frozen {
                sys: self.sys,
                u: &u,
            };
            let t = k as f64 * self.h;
            rk4_step(&field, t, self.h, &x, &mut next, &mut ws)?;
            enforce_invariants(layout, t + self.h, &mut next)?;
            std::mem::swap(&mut x, &mut next);
            xs.push(x.clone());
        }
        Ok(xs)
    }

    /// Costates and switching values at every grid node.
    fn backward(&self, xs: &[Vec<f64>], frac: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dim = xs[0].len();
        let m = self.sys.lower().len();
        let h = self.h;
        let mut lams = vec![vec![0.0; dim]; self.cells + 1];
        let mut sig = vec![vec![0.0; m]; self.cells + 1];
        self.sys
            .switching(&xs[self.cells], &lams[self.cells], &mut sig[self.cells]);
        let (mut d0, mut d1) = (vec![0.0; dim], vec![0.0; dim]);
        let mut mid = vec![0.0; dim];
        let (mut k1, mut k2, mut k3, mut k4) = (
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
            vec![0.0; dim],
        );
        let mut tmp = vec![0.0; dim];
        let mut u = vec![0.0; m];
        let mut l1 = vec![0.0; dim];
        for k in (0..self.cells).rev() {
            self.control_into(&frac[k], &mut u);
            let (x0, x1) = (&xs[k], &xs[k + 1]);
            self.sys.dynamics(x0, &u, &mut d0);
            self.sys.dynamics(x1, &u, &mut d1);
            for i in 0..dim {
                mid[i] = 0.5 * (x0[i] + x1[i]) + h / 8.0 * (d0[i] - d1[i]);
            }
            l1.copy_from_slice(&lams[k + 1]);
            self.sys.costate_rhs(x1, &u, &l1, &mut k1);
            for i in 0..dim {
                tmp[i] = l1[i] - 0.5 * h * k1[i];
            }
            self.sys.costate_rhs(&mid, &u, &tmp, &mut k2);
            for i in 0..dim {
                tmp[i] = l1[i] - 0.5 * h * k2[i];
            }
            self.sys.costate_rhs(&mid, &u, &tmp, &mut k3);
            for i in 0..dim {
                tmp[i] = l1[i] - h * k3[i];
            }
            self.sys.costate_rhs(x0, &u, &tmp, &mut k4);
            for i in 0..dim {
                lams[k][i] = l1[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            self.sys.switching(x0, &lams[k], &mut sig[k]);
        }
        (lams, sig)
    }

    fn update(&self, sig: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
        (0..self.cells)
            .map(|k| {
                sig[k]
                    .iter()
                    .zip(&sig[k + 1])
                    .zip(&self.shift)
                    .map(|((&a, &b), &shift)| cell_ramp(a, b, shift, eps))
                    .collect()
            })
            .collect()
    }

    fn relaxed_schedule(&self, frac: &[Vec<f64>]) -> Result<PolicySchedule, ControlError> {
        let pieces = frac
            .iter()
            .enumerate()
            .map(|(k, f)| (k as f64 * self.h, self.control(f)))
            .collect();
        self.schedule_from(pieces)
    }

    fn schedule_from(&self, pieces: Vec<(f64, Vec<f64>)>) -> Result<PolicySchedule, ControlError> {
        PolicySchedule::from_pieces(
            self.sys.signal(),
            self.sys.horizon(),
            self.sys.lower().to_vec(),
            self.sys.upper().to_vec(),
            pieces,
        )
    }

    /// Bang-bang schedule from converged cell fractions. A fractional cell
    /// holds one crossing of the (linear) switching function; which side is
    /// at the upper bound follows from the sign at the cell's left node.
    fn snapped_schedule(
        &self,
        frac: &[Vec<f64>],
        sig: &[Vec<f64>],
    ) -> Result<PolicySchedule, ControlError> {
        let (lo, hi) = (self.sys.lower(), self.sys.upper());
        let m = lo.len();
        let h = self.h;
        let pick = |upper: &[bool]| -> Vec<f64> {
            (0..m)
                .map(|s| if upper[s] { hi[s] } else { lo[s] })
                .collect()
        };
        match self.sys.snap_mode() {
            SnapMode::SingleSwitch => {
                let tau: Vec<f64> = (0..m)
                    .map(|s| frac.iter().map(|f| f[s]).sum::<f64>() * h)
                    .collect();
                let mut cuts: Vec<f64> = std::iter::once(0.0)
                    .chain(
                        tau.iter()
                            .copied()
                            .filter(|&t| t > 0.0 && t < self.sys.horizon()),
                    )
                    .collect();
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let pieces = cuts
                    .iter()
                    .map(|&c| {
                        let up: Vec<bool> = tau.iter().map(|&t| c < t).collect();
                        (c, pick(&up))
                    })
                    .collect();
                self.schedule_from(pieces)
            }
            SnapMode::SignChanges => {
                let mut pieces = Vec::new();
                for (k, f) in frac.iter().enumerate() {
                    let t0 = k as f64 * h;
                    // crossing offset within the cell for each fractional signal
                    let mut cuts = vec![0.0];
                    for s in 0..m {
                        if f[s] > 0.0 && f[s] < 1.0 {
                            let first_upper = sig[k][s] + self.shift[s] < 0.0;
                            cuts.push(if first_upper { f[s] } else { 1.0 - f[s] });
                        }
                    }
                    cuts.sort_by(f64::total_cmp);
                    cuts.dedup();
                    for (c_idx, &c) in cuts.iter().enumerate() {
                        let next = cuts.get(c_idx + 1).copied().unwrap_or(1.0);
                        let centre = 0.5 * (c + next);
                        let up: Vec<bool> = (0..m)
                            .map(|s| {
                                if f[s] >= 1.0 {
                                    true
                                } else if f[s] <= 0.0 {
                                    false
                                } else if sig[k][s] + self.shift[s] < 0.0 {
                                    centre < f[s]
                                } else {
                                    centre > 1.0 - f[s]
                                }
                            })
                            .collect();
                        pieces.push((t0 + c * h, pick(&up)));
                    }
                }
                self.schedule_from(pieces)
            }
        }
    }
}

/// Sweeps without a new smallest control change before the relaxation
/// weight is halved.
const STALL_WINDOW: usize = 10;
const MIN_RELAXATION: f64 = 1e-3;

/// Smallest ramp width tried, relative to the largest `|σ|`.
const SMOOTHING_FLOOR: f64 = 1e-4;

const ANDERSON_DEPTH: usize = 5;

/// Anderson mixing with damping for the fixed point `x = G(x)`.
struct Anderson {
    depth: usize,
    last: Option<(Vec<f64>, Vec<f64>)>,
    dg: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            last: None,
            dg: VecDeque::new(),
            df: VecDeque::new(),
        }
    }

    fn reset(&mut self) {
        self.last = None;
        self.dg.clear();
        self.df.clear();
    }

    fn next(&mut self, x: &[f64], g: &[f64], beta: f64) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        if let Some((lg, lf)) = self.last.take() {
            self.dg
                .push_back(g.iter().zip(&lg).map(|(a, b)| a - b).collect());
            self.df
                .push_back(f.iter().zip(&lf).map(|(a, b)| a - b).collect());
            if self.df.len() > self.depth {
                self.dg.pop_front();
                self.df.pop_front();
            }
        }
        self.last = Some((g.to_vec(), f.clone()));
        let p = self.df.len();
        let gamma = if p == 0 {
            None
        } else {
            // normal equations; the history is short
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let gram = DMatrix::from_fn(p, p, |i, j| dot(&self.df[i], &self.df[j]));
            let rhs = DVector::from_fn(p, |i, _| dot(&self.df[i], &f));
            let svd = gram.svd(true, true);
            let cut = 1e-14 * svd.singular_values.max();
            svd.solve(&rhs, cut).ok()
        };
        let mut out = Vec::with_capacity(f.len());
        for i in 0..f.len() {
            let (mut gi, mut fi) = (g[i], f[i]);
            if let Some(gamma) = &gamma {
                for j in 0..p {
                    gi -= gamma[j] * self.dg[j][i];
                    fi -= gamma[j] * self.df[j][i];
                }
            }
            out.push(gi - (1.0 - beta) * fi);
        }
        out
    }
}

enum Stage {
    Converged(Vec<Vec<f64>>),
    Stalled,
}

struct Relaxation {
    sig_bar: Vec<Vec<f64>>,
    iterations: usize,
}

impl Relaxation {
    /// Iterates `σ̄ ← (1 − ω) σ̄ + ω σ(u(σ̄))` until the control stops moving.
    /// `ω` starts at the configured weight and is halved whenever the
    /// smallest change so far has not improved for `STALL_WINDOW` sweeps:
    /// a switch time that reacts steeply to the control otherwise settles
    /// into a cycle. Stalling at the smallest weight ends the stage.
    fn run<S: ControlledSystem + ?Sized>(
        &mut self,
        sweep: &Sweep<'_, S>,
        eps: f64,
        opts: &FbsOptions,
    ) -> Result<Stage, ControlError> {
        let m = sweep.sys.lower().len();
        let width: Vec<f64> = sweep
            .sys
            .lower()
            .iter()
            .zip(sweep.sys.upper())
            .map(|(l, u)| u - l)
            .collect();
        let mut w = opts.relaxation;
        let (mut best, mut since_best) = (f64::INFINITY, 0);
        let mut frac = sweep.update(&self.sig_bar, eps);
        let mut mixer = Anderson::new(ANDERSON_DEPTH);
        loop {
            if self.iterations == opts.max_iterations {
                return Err(ControlError::NoConvergence {
                    iterations: self.iterations,
                    change: best,
                });
            }
            self.iterations += 1;
            let xs = sweep.forward(&frac)?;
            let (_, sig) = sweep.backward(&xs, &frac);
            let target = sweep.update(&sig, eps);
            let mut change = 0.0f64;
            for (f, t) in frac.iter().zip(&target) {
                for s in 0..m {
                    change = change.max((t[s] - f[s]).abs() * width[s]);
                }
            }
            if change <= opts.tol {
                self.sig_bar = sig;
                return Ok(Stage::Converged(target));
            }
            if eps > 0.0 {
                // the smoothed map is continuous, so Anderson mixing applies
                let x: Vec<f64> = self.sig_bar.iter().flatten().copied().collect();
                let g: Vec<f64> = sig.iter().flatten().copied().collect();
                let next = mixer.next(&x, &g, w);
                for (b, chunk) in self.sig_bar.iter_mut().zip(next.chunks(m)) {
                    b.copy_from_slice(chunk);
                }
            } else {
                for (b, s) in self.sig_bar.iter_mut().zip(&sig) {
                    for (bv, sv) in b.iter_mut().zip(s) {
                        *bv = (1.0 - w) * *bv + w * sv;
                    }
                }
            }
            frac = sweep.update(&self.sig_bar, eps);
            if change < best {
                best = change;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= STALL_WINDOW {
                    if w <= MIN_RELAXATION {
                        return Ok(Stage::Stalled);
                    }
                    w = (0.5 * w).max(MIN_RELAXATION);
                    mixer.reset();
                    best = change;
                    since_best = 0;
                }
            }
        }
    }
}

/// Forward-backward sweep from `x0`, followed by the bang-bang snap.
pub fn forward_backward_sweep<S: ControlledSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    opts: &FbsOptions,
) -> Result<FbsResult, ControlError> {
    let layout = sys.layout();
    if x0.len() != layout.len() {
        return Err(ControlError::Dimension {
            what: "initial state".into(),
            expected: layout.len(),
            got: x0.len(),
        });
    }
    let t_end = sys.horizon();
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(ControlError::InvalidParameter {
            name: "dt".into(),
            value: opts.dt,
            reason: "step must be positive",
        });
    }
    if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
        return Err(ControlError::InvalidParameter {
            name: "relaxation".into(),
            value: opts.relaxation,
            reason: "must lie in (0, 1]",
        });
    }
    let cells = ((t_end / opts.dt).round() as usize).max(1);
    let sweep = Sweep {
        sys,
        h: t_end / cells as f64,
        cells,
        x0: x0.to_vec(),
        shift: (0..sys.lower().len())
            .map(|s| {
                if sys.tie_upper(s) {
                    -opts.dead_band
                } else {
                    opts.dead_band
                }
            })
            .collect(),
    };
    let m = sys.lower().len();

    // Relaxation acts on the switching function; the control is the cell
    // average of the bang-bang law applied to the relaxed values.
    let zero = vec![vec![0.0; m]; cells];
    let xs = sweep.forward(&zero)?;
    let (_, sig0) = sweep.backward(&xs, &zero);
    let mut state = Relaxation {
        sig_bar: sig0,
        iterations: 0,
    };
    let mut smoothing = 0.0;
    let frac = match state.run(&sweep, 0.0, opts)? {
        Stage::Converged(frac) => frac,
        Stage::Stalled => {
            // No bang-bang fixed point, typically because the switching
            // function vanishes on an interval. Continue with a ramp of
            // width ε around σ = 0, shrinking ε while the sweep converges.
            let scale = state
                .sig_bar
                .iter()
                .flatten()
                .fold(0.0f64, |a, v| a.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            let mut eps = 0.1 * scale;
            let mut last = None;
            while eps >= SMOOTHING_FLOOR * scale {
                let saved = state.sig_bar.clone();
                match state.run(&sweep, eps, opts)? {
                    Stage::Converged(frac) => {
                        last = Some(frac);
                        smoothing = eps;
                        eps *= 0.1;
                    }
                    Stage::Stalled => {
                        state.sig_bar = saved;
                        break;
                    }
                }
            }
            last.ok_or(ControlError::NoConvergence {
                iterations: state.iterations,
                change: f64::NAN,
            })?
        }
    };
    let iterations = state.iterations;

    let xs = sweep.forward(&frac)?;
    let (lams, sig) = sweep.backward(&xs, &frac);
    let times: Vec<f64> = (0..=cells).map(|k| k as f64 * sweep.h).collect();
    let costate = CostateTrajectory {
        times,
        costate: lams,
        switching: sig.clone(),
    };

    let relaxed = sweep.relaxed_schedule(&frac)?;
    let relaxed_traj = simulate(sys, x0, &relaxed, opts.dt)?;
    let relaxed_objective = evaluate_objective(sys, &relaxed, &relaxed_traj)?;
    let snapped = sweep.snapped_schedule(&frac, &sig)?;
    let snapped_traj = simulate(sys, x0, &snapped, opts.dt)?;
    let snapped_objective = evaluate_objective(sys, &snapped, &snapped_traj)?;
    // Adjacent fractional cells mean an interior arc rather than a switch;
    // splitting each of them would only chatter.
    let interior_arc = (0..m).any(|s| {
        frac.windows(2).any(|w| {
            (0.0..1.0).contains(&w[0][s]) && w[0][s] > 0.0 && w[1][s] > 0.0 && w[1][s] < 1.0
        })
    });
    let ok = !interior_arc
        && (snapped_objective - relaxed_objective).abs()
            <= opts.snap_tol * relaxed_objective.abs().max(1e-12);
    let (schedule, trajectory, objective) = if ok {
        (snapped, snapped_traj, snapped_objective)
    } else {
        (relaxed, relaxed_traj, relaxed_objective)
    };
    Ok(FbsResult {
        switches: (0..m).map(|s| schedule.switches(s)).collect(),
        schedule,
        objective,
        relaxed_objective,
        snapped: ok,
        iterations,
        smoothing,
        costate,
        trajectory,
        heuristic: sys.heuristic(),
    })
}

pub(crate) fn check_weight(name: &str, v: f64) -> Result<(), ControlError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ControlError::InvalidParameter {
            name: name.to_string(),
            value: v,
            reason: "must be finite and nonnegative",
        })
    }
}

pub(crate) fn check_horizon(t: f64) -> Result<(), ControlError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(ControlError::InvalidParameter {
            name: "horizon".into(),
            value: t,
            reason: "must be finite and positive",
        })
    }
}
