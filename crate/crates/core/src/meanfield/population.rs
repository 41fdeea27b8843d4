//! Well-mixed population models.

use serde::{Deserialize, Serialize};

use super::{check_nonnegative, Compartment, MeanFieldError, StateLayout, VectorField};

/// Compartment fractions; a model uses whichever subset it needs and leaves
/// the rest at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub p: f64,
}

impl PopulationState {
    pub fn sis(i: f64) -> Self {
        Self {
            s: 1.0 - i,
            i,
            ..Self::default()
        }
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.p
    }
}

/// `(ṡ, i̇, ṙ) = (−βis, βis − δi, δi)`.
pub fn rhs_population_sir(x: &PopulationState, beta: f64, delta: f64) -> PopulationState {
    let flow = beta * x.i * x.s;
    PopulationState {
        s: -flow,
        i: flow - delta * x.i,
        r: delta * x.i,
        p: 0.0,
    }
}

/// `(ṡ, i̇) = (−βis + δi, βis − δi)`.
pub fn rhs_population_sis(x: &PopulationState, beta: f64, delta: f64) -> PopulationState {
    let net = beta * x.i * x.s - delta * x.i;
    PopulationState {
        s: -net,
        i: net,
        ..PopulationState::default()
    }
}

/// `ṗ = βp(1 − p) − δp`.
pub fn rhs_population_sis_reduced(p: f64, beta: f64, delta: f64) -> f64 {
    beta * p * (1.0 - p) - delta * p
}

/// Analytic solution of the reduced SIS equation.
pub fn closed_form_population_sis(beta: f64, delta: f64, p0: f64, t: f64) -> f64 {
    if p0 == 0.0 {
        return 0.0;
    }
    let k = beta - delta;
    if k.abs() <= 1e-12 {
        return 1.0 / (beta * t + 1.0 / p0);
    }
    if k > 0.0 {
        // divided through by e^{kt} so large t does not overflow
        let e = (-k * t).exp();
        1.0 / (beta * (1.0 - e) / k + e / p0)
    } else {
        let e = (k * t).exp();
        e / (beta * (e - 1.0) / k + 1.0 / p0)
    }
}

/// Built-in protection feedback laws `f(s, i, p)` / `g(s, i, p)`.
///
/// In network models the second argument is the infected pressure
/// `Σ_j a_ij p_j^I` seen by the node rather than its own infected fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feedback {
    Constant {
        rate: f64,
    },
    LinearInfected {
        gain: f64,
    },
    /// `max_rate · i / (half + i)`.
    Saturating {
        max_rate: f64,
        half: f64,
    },
}

impl Feedback {
    pub const ZERO: Feedback = Feedback::Constant { rate: 0.0 };

    pub fn evaluate(&self, name: &str, s: f64, i: f64, p: f64) -> Result<f64, MeanFieldError> {
        let _ = (s, p);
        let v = match *self {
            Feedback::Constant { rate } => rate,
            Feedback::LinearInfected { gain } => gain * i,
            Feedback::Saturating { max_rate, half } => {
                if half + i == 0.0 {
                    0.0
                } else {
                    max_rate * i / (half + i)
                }
            }
        };
        if v < 0.0 || !v.is_finite() {
            return Err(MeanFieldError::NegativeFeedback {
                name: name.to_string(),
                value: v,
            });
        }
        Ok(v)
    }
}

/// Susceptible-protected-infected-susceptible population dynamics.
pub fn rhs_spis_population(
    x: &PopulationState,
    beta: f64,
    delta: f64,
    f: &Feedback,
    g: &Feedback,
) -> Result<PopulationState, MeanFieldError> {
    let fv = f.evaluate("f", x.s, x.i, x.p)?;
    let gv = g.evaluate("g", x.s, x.i, x.p)?;
    let infection = beta * x.i * x.s;
    let protect = x.s * fv;
    let unprotect = x.p * gv;
    Ok(PopulationState {
        s: -infection + delta * x.i - protect + unprotect,
        i: infection - delta * x.i,
        r: 0.0,
        p: protect - unprotect,
    })
}

fn check_rates(beta: f64, delta: f64) -> Result<(), MeanFieldError> {
    check_nonnegative("beta", beta)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(MeanFieldError::InvalidParameter {
            name: "delta".into(),
            value: delta,
            reason: "recovery rate must be positive",
        });
    }
    Ok(())
}

/// State `[s, i, r]`.
#[derive(Clone, Debug)]
pub struct PopulationSir {
    pub beta: f64,
    pub delta: f64,
    layout: StateLayout,
}

impl PopulationSir {
    pub fn new(beta: f64, delta: f64) -> Result<Self, MeanFieldError> {
        check_rates(beta, delta)?;
        Ok(Self {
            beta,
            delta,
            layout: StateLayout::new(&[Compartment::S, Compartment::I, Compartment::R], 1, true),
        })
    }
}

impl VectorField for PopulationSir {
    fn name(&self) -> &str {
        "population_sir"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        let st = PopulationState {
            s: x[0],
            i: x[1],
            r: x[2],
            p: 0.0,
        };
        let d = rhs_population_sir(&st, self.beta, self.delta);
        dx[0] = d.s;
        dx[1] = d.i;
        dx[2] = d.r;
        Ok(())
    }
}

/// State `[s, i]`.
#[derive(Clone, Debug)]
pub struct PopulationSis {
    pub beta: f64,
    pub delta: f64,
    layout: StateLayout,
}

impl PopulationSis {
    pub fn new(beta: f64, delta: f64) -> Result<Self, MeanFieldError> {
        check_rates(beta, delta)?;
        Ok(Self {
            beta,
            delta,
            layout: StateLayout::new(&[Compartment::S, Compartment::I], 1, true),
        })
    }
}

impl VectorField for PopulationSis {
    fn name(&self) -> &str {
        "population_sis"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        let d = rhs_population_sis(
            &PopulationState {
                s: x[0],
                i: x[1],
                ..PopulationState::default()
            },
            self.beta,
            self.delta,
        );
        dx[0] = d.s;
        dx[1] = d.i;
        Ok(())
    }
}

/// State `[i]`, using `s = 1 − i`.
#[derive(Clone, Debug)]
pub struct ReducedSis {
    pub beta: f64,
    pub delta: f64,
    layout: StateLayout,
}

impl ReducedSis {
    pub fn new(beta: f64, delta: f64) -> Result<Self, MeanFieldError> {
        check_rates(beta, delta)?;
        Ok(Self {
            beta,
            delta,
            layout: StateLayout::new(&[Compartment::I], 1, false),
        })
    }
}

impl VectorField for ReducedSis {
    fn name(&self) -> &str {
        "population_sis_reduced"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        dx[0] = rhs_population_sis_reduced(x[0], self.beta, self.delta);
        Ok(())
    }
}

/// State `[s, i, p]`.
#[derive(Clone, Debug)]
pub struct PopulationSpis {
    pub beta: f64,
    pub delta: f64,
    pub f: Feedback,
    pub g: Feedback,
    layout: StateLayout,
}

impl PopulationSpis {
    pub fn new(beta: f64, delta: f64, f: Feedback, g: Feedback) -> Result<Self, MeanFieldError> {
        check_rates(beta, delta)?;
        Ok(Self {
            beta,
            delta,
            f,
            g,
            layout: StateLayout::new(&[Compartment::S, Compartment::I, Compartment::P], 1, true),
        })
    }
}

impl VectorField for PopulationSpis {
    fn name(&self) -> &str {
        "population_spis"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        let st = PopulationState {
            s: x[0],
            i: x[1],
            r: 0.0,
            p: x[2],
        };
        let d = rhs_spis_population(&st, self.beta, self.delta, &self.f, &self.g)?;
        dx[0] = d.s;
        dx[1] = d.i;
        dx[2] = d.p;
        Ok(())
    }
}
