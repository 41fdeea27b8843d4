//! The allocation geometric program and a log-barrier interior-point solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::posynomial::{Monomial, Posynomial};
use super::{AllocationError, AllocationProblem};

/// A decision variable, or a constant when its box is degenerate (or the
/// budget pins it to the zero-spend point).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GpVar {
    Free(usize),
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Eigen(usize),
    Budget,
    BetaUpper(usize),
    BetaLower(usize),
    DeltaTildeUpper(usize),
    DeltaTildeLower(usize),
}

/// `minimise x[objective]` subject to `q_k(x) ≤ 1` and monomial equalities
/// `h_l(x) = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricProgram {
    pub arity: usize,
    pub constraints: Vec<(ConstraintKind, Posynomial)>,
    pub equalities: Vec<Monomial>,
    pub lambda: usize,
    pub beta: Vec<GpVar>,
    pub delta_tilde: Vec<GpVar>,
    pub u: Vec<usize>,
    pub phi: f64,
}

impl GeometricProgram {
    pub fn count(&self, pred: impl Fn(ConstraintKind) -> bool) -> usize {
        self.constraints.iter().filter(|(k, _)| pred(*k)).count()
    }

    /// `max_k q_k(x)`: at most 1 exactly when `x` is feasible.
    pub fn max_constraint(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|(_, q)| q.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Variables are ordered `[λ, free β_i, free δ̃_i, u_0..u_{n−1}]`.
pub fn build_gp(problem: &AllocationProblem) -> Result<GeometricProgram, AllocationError> {
    problem.validate()?;
    let n = problem.n();
    let phi = problem.phi();
    let pinned = problem.budget == 0.0;
    let mut arity = 1;
    let mut var = |lo: f64, hi: f64, zero_spend: f64, free_cost: bool| {
        if lo == hi {
            GpVar::Fixed(lo)
        } else if pinned && !free_cost {
            GpVar::Fixed(zero_spend)
        } else {
            arity += 1;
            GpVar::Free(arity - 1)
        }
    };
    let beta: Vec<GpVar> = (0..n)
        .map(|i| {
            let hi = problem.beta_max[i];
            var(problem.beta_min[i], hi, hi, problem.beta_cost[i].is_free())
        })
        .collect();
    let delta_tilde: Vec<GpVar> = (0..n)
        .map(|i| {
            let hi = phi - problem.delta_min[i];
            var(
                phi - problem.delta_max[i],
                hi,
                hi,
                problem.delta_cost[i].is_free(),
            )
        })
        .collect();
    let u: Vec<usize> = (arity..arity + n).collect();
    arity += n;
    let lambda = 0;

    let mut constraints = Vec::new();
    // monomial factor for a possibly fixed variable
    let factor = |v: GpVar, powers: &mut Vec<(usize, f64)>| -> f64 {
        match v {
            GpVar::Free(k) => {
                powers.push((k, 1.0));
                1.0
            }
            GpVar::Fixed(c) => c,
        }
    };
    for i in 0..n {
        let mut q = Posynomial::new(arity);
        for (j, a) in problem.graph.in_neighbors(i) {
            let mut powers = vec![(u[j], 1.0), (u[i], -1.0), (lambda, -1.0)];
            let c = a * factor(beta[i], &mut powers);
            q.push(c, &powers)?;
        }
        let mut powers = vec![(lambda, -1.0)];
        let c = factor(delta_tilde[i], &mut powers);
        q.push(c, &powers)?;
        constraints.push((ConstraintKind::Eigen(i), q));
    }

    let mut budget = Posynomial::new(arity);
    let mut offset = 0.0;
    for i in 0..n {
        let curves = [
            (beta[i], problem.beta_cost[i], problem.beta_max[i]),
            (
                delta_tilde[i],
                problem.delta_cost[i],
                phi - problem.delta_min[i],
            ),
        ];
        for (v, curve, x0) in curves {
            if let (GpVar::Free(k), Some((s, a))) = (v, curve.terms()) {
                budget.push(s, &[(k, -a)])?;
                offset += s * x0.powf(-a);
            }
        }
    }
    if !budget.is_empty() {
        budget.scale(1.0 / (problem.budget + offset));
        constraints.push((ConstraintKind::Budget, budget));
    }

    for i in 0..n {
        if let GpVar::Free(k) = beta[i] {
            let (lo, hi) = (problem.beta_min[i], problem.beta_max[i]);
            constraints.push((
                ConstraintKind::BetaUpper(i),
                Posynomial::monomial(arity, 1.0 / hi, &[(k, 1.0)])?,
            ));
            constraints.push((
                ConstraintKind::BetaLower(i),
                Posynomial::monomial(arity, lo, &[(k, -1.0)])?,
            ));
        }
        if let GpVar::Free(k) = delta_tilde[i] {
            let (lo, hi) = (phi - problem.delta_max[i], phi - problem.delta_min[i]);
            constraints.push((
                ConstraintKind::DeltaTildeUpper(i),
                Posynomial::monomial(arity, 1.0 / hi, &[(k, 1.0)])?,
            ));
            constraints.push((
                ConstraintKind::DeltaTildeLower(i),
                Posynomial::monomial(arity, lo, &[(k, -1.0)])?,
            ));
        }
    }

    // u is only defined up to scale: pin Π u_i = 1
    let mut exponents = vec![0.0; arity];
    for &k in &u {
        exponents[k] = 1.0;
    }
    let equalities = vec![Monomial {
        coefficient: 1.0,
        exponents,
    }];

    Ok(GeometricProgram {
        arity,
        constraints,
        equalities,
        lambda,
        beta,
        delta_tilde,
        u,
        phi,
    })
}

#[derive(Clone, Debug)]
pub struct GpOptions {
    /// Target for `m / t`, the duality-gap bound on `ln λ`.
    pub gap_tol: f64,
    /// Centering stops once half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub barrier_growth: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            newton_tol: 1e-12,
            max_newton: 200,
            barrier_growth: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpDiagnostics {
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    /// `‖∇f₀ + Σ μ_k ∇F_k + Aᵀν‖∞` in log coordinates at the returned point.
    pub kkt_residual: f64,
    /// Duality-gap bound `m / t` on the log objective.
    pub duality_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub diagnostics: GpDiagnostics,
}

struct Barrier<'a> {
    gp: &'a GeometricProgram,
    /// Equality rows `A` and offsets `b` with `A y + b = 0`.
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Barrier<'_> {
    /// `t y_λ − Σ ln(−F_k(y))`, or `None` outside the domain.
    fn value(&self, y: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = t * y[self.gp.lambda];
        for (_, q) in &self.gp.constraints {
            let f = q.log_eval(y);
            if !(f < 0.0) {
                return None;
            }
            v -= (-f).ln();
        }
        Some(v)
    }

    fn derivatives(&self, y: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.gp.arity;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        g[self.gp.lambda] = t;
        for (_, q) in &self.gp.constraints {
            let (f, gf, hf) = q.log_derivatives(y);
            let inv = -1.0 / f;
            g += &gf * inv;
            h += &hf * inv + &gf * gf.transpose() * (inv * inv);
        }
        (g, h)
    }

    /// Stationarity residual `‖∇f₀ + Σ μ_k ∇F_k + Aᵀν‖∞` of the original
    /// problem, with multipliers fitted by least squares over the constraints
    /// whose log-slack is below `1e-5` (inactive ones get `μ = 0`). The barrier
    /// estimates `1/(−t F_k)` are not used: `F_k` is only known to machine
    /// precision, which at large `t` puts a relative error of `t·ε` on them.
    /// Negative fitted multipliers and equality violations count as residual.
    fn kkt_residual(&self, y: &DVector<f64>) -> f64 {
        let k = self.gp.arity;
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (_, q) in &self.gp.constraints {
            if q.log_eval(y) > -1e-5 {
                cols.push(q.log_derivatives(y).1);
            }
        }
        let active = cols.len();
        for r in 0..self.a.nrows() {
            cols.push(self.a.row(r).transpose());
        }
        let mut grad0 = DVector::<f64>::zeros(k);
        grad0[self.gp.lambda] = 1.0;
        let primal: f64 = if self.a.nrows() == 0 {
            0.0
        } else {
            (&self.a * y + &self.b).amax()
        };
        if cols.is_empty() {
            return grad0.amax().max(primal);
        }
        let j = DMatrix::from_columns(&cols);
        let z = j
            .clone()
            .svd(true, true)
            .solve(&(-&grad0), 1e-14)
            .unwrap_or_else(|_| DVector::zeros(cols.len()));
        let r = &grad0 + &j * &z;
        let negative = z.rows(0, active).iter().fold(0.0f64, |a, &m| a.max(-m));
        r.amax().max(negative).max(primal)
    }
}

/// Minimises the objective from the strictly feasible `start` (in natural,
/// not log, coordinates).
///
/// Works on `y = ln x`, where each constraint `ln q_k(e^y) ≤ 0` is convex.
/// The barrier weight starts at 1 and grows tenfold until `m / t` falls below
/// the gap tolerance; each centering step is damped Newton on the equality
/// constrained barrier problem with a backtracking line search that never
/// leaves the strict interior. The start is first projected onto the monomial
/// equalities.
pub fn solve_gp(
    gp: &GeometricProgram,
    start: &[f64],
    opts: &GpOptions,
) -> Result<GpSolution, AllocationError> {
    if start.len() != gp.arity {
        return Err(AllocationError::Dimension {
            what: "starting point".into(),
            expected: gp.arity,
            got: start.len(),
        });
    }
    if let Some(&bad) = start.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(AllocationError::InvalidParameter {
            name: "starting point".into(),
            value: bad,
            reason: "GP variables must be positive",
        });
    }
    let k = gp.arity;
    let p = gp.equalities.len();
    let a = DMatrix::from_fn(p, k, |r, c| gp.equalities[r].exponents[c]);
    let b = DVector::from_iterator(p, gp.equalities.iter().map(|m| m.coefficient.ln()));
    let barrier = Barrier { gp, a, b };

    let mut y = DVector::from_iterator(k, start.iter().map(|v| v.ln()));
    if p > 0 {
        let r = &barrier.a * &y + &barrier.b;
        let aat = &barrier.a * barrier.a.transpose();
        if let Some(w) = aat.lu().solve(&r) {
            y -= barrier.a.transpose() * w;
        }
    }
    for (idx, (_, q)) in gp.constraints.iter().enumerate() {
        let f = q.log_eval(&y);
        if !(f < 0.0) {
            return Err(AllocationError::InfeasibleStart {
                constraint: idx,
                value: f.exp(),
            });
        }
    }

    let m = gp.constraints.len() as f64;
    let mut t = 1.0;
    let mut outer = 0;
    let mut newton = 0;
    loop {
        outer += 1;
        newton += center(&barrier, &mut y, t, opts)?;
        if m / t <= opts.gap_tol || m == 0.0 {
            break;
        }
        t *= opts.barrier_growth;
    }
    let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    Ok(GpSolution {
        objective: x[gp.lambda],
        diagnostics: GpDiagnostics {
            outer_iterations: outer,
            newton_iterations: newton,
            kkt_residual: barrier.kkt_residual(&y),
            duality_gap: m / t,
        },
        x,
    })
}

const QUADRATIC_REGION: f64 = 1e-3;
const PRECISION_FLOOR: f64 = 1e-6;

fn center(
    barrier: &Barrier<'_>,
    y: &mut DVector<f64>,
    t: f64,
    opts: &GpOptions,
) -> Result<usize, AllocationError> {
    let k = barrier.gp.arity;
    let p = barrier.a.nrows();
    let mut decrement = f64::INFINITY;
    for iter in 1..=opts.max_newton {
        let f0 = barrier
            .value(y, t)
            .expect("iterate stays strictly feasible");
        let (g, h) = barrier.derivatives(y, t);
        let mut kkt = DMatrix::zeros(k + p, k + p);
        kkt.view_mut((0, 0), (k, k)).copy_from(&h);
        kkt.view_mut((0, k), (k, p))
            .copy_from(&barrier.a.transpose());
        kkt.view_mut((k, 0), (p, k)).copy_from(&barrier.a);
        let mut rhs = DVector::zeros(k + p);
        rhs.rows_mut(0, k).copy_from(&(-&g));
        rhs.rows_mut(k, p)
            .copy_from(&(-(&barrier.a * &*y + &barrier.b)));
        let Some(sol) = kkt.lu().solve(&rhs) else {
            return Err(AllocationError::NoConvergence {
                t,
                iterations: iter,
                decrement,
            });
        };
        let dy = sol.rows(0, k).into_owned();
        let previous = decrement;
        decrement = dy.dot(&(&h * &dy)).max(0.0);
        let done = decrement / 2.0 <= opts.newton_tol;
        // Below this the barrier value (of size ~t) can no longer resolve
        // the predicted decrease, so an Armijo test is noise. Pure Newton is
        // safe there; stop once the decrement stops shrinking.
        let quadratic = decrement / 2.0 <= QUADRATIC_REGION;
        if !done && quadratic && decrement / 2.0 <= PRECISION_FLOOR && decrement > 0.5 * previous {
            return Ok(iter);
        }
        let slope = g.dot(&dy);
        let mut s = 1.0;
        loop {
            let trial = &*y + &dy * s;
            if let Some(f) = barrier.value(&trial, t) {
                if quadratic || f <= f0 + 0.25 * s * slope {
                    *y = trial;
                    break;
                }
            }
            s *= 0.5;
            if s < 1e-14 {
                return Err(AllocationError::NoConvergence {
                    t,
                    iterations: iter,
                    decrement,
                });
            }
        }
        if done {
            // the step just taken squares the remaining gradient away
            return Ok(iter);
        }
    }
    Err(AllocationError::NoConvergence {
        t,
        iterations: opts.max_newton,
        decrement,
    })
}
