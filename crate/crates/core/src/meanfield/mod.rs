//! Deterministic epidemic models.
//!
//! Every model implements [`VectorField`] over a flat state vector whose
//! [`StateLayout`] lists the tracked compartments. The storage is
//! compartment-major: entry `c * nodes + i` is compartment `c` at node `i`.
//! Population models are the `nodes == 1` case.

mod equilibrium;
mod integrate;
mod network;
mod population;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, SpectralError};

pub use equilibrium::{
    endemic_equilibrium, endemic_equilibrium_with, Equilibrium, EquilibriumOptions,
};
pub use integrate::{
    enforce_invariants, integrate, rk4_step, IntegrateOptions, Rk4Workspace, CLAMP_TOL,
    CONSERVATION_TOL,
};
pub use network::{
    rhs_bivirus, rhs_network_sis, rhs_network_spis, rhs_sir_patching, Bivirus, MetaPopulation,
    NetworkSis, NetworkSpis, SirPatching,
};
pub use population::{
    closed_form_population_sis, rhs_population_sir, rhs_population_sis, rhs_population_sis_reduced,
    rhs_spis_population, Feedback, PopulationSir, PopulationSis, PopulationSpis, PopulationState,
    ReducedSis,
};

#[derive(Debug, Error, PartialEq)]
pub enum MeanFieldError {
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
    #[error("feedback function `{name}` returned a negative value {value}")]
    NegativeFeedback { name: String, value: f64 },
    #[error("state left [0, 1] at t = {time}: entry {index} = {value}")]
    OutOfBounds { time: f64, index: usize, value: f64 },
    #[error("compartments of node {node} sum to {sum} at t = {time}")]
    Conservation { time: f64, node: usize, sum: f64 },
    #[error("control u[{node}] = {value} outside [0, {upper}]")]
    ControlOutOfBounds { node: usize, value: f64, upper: f64 },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("fixed-point iteration stalled after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    S,
    I,
    R,
    P,
    I1,
    I2,
}

impl Compartment {
    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::I => "I",
            Compartment::R => "R",
            Compartment::P => "P",
            Compartment::I1 => "I1",
            Compartment::I2 => "I2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub compartments: Vec<Compartment>,
    pub nodes: usize,
    /// Whether the compartments of each node are exhaustive and must sum to 1.
    pub closed: bool,
}

impl StateLayout {
    pub fn new(compartments: &[Compartment], nodes: usize, closed: bool) -> Self {
        Self {
            compartments: compartments.to_vec(),
            nodes,
            closed,
        }
    }

    pub fn len(&self) -> usize {
        self.compartments.len() * self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: Compartment, node: usize) -> Option<usize> {
        let k = self.compartments.iter().position(|&x| x == c)?;
        (node < self.nodes).then_some(k * self.nodes + node)
    }

    /// `I_0, I_1, ...`, or just `I` for population models.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        for c in &self.compartments {
            if self.nodes == 1 {
                names.push(c.label().to_string());
            } else {
                names.extend((0..self.nodes).map(|i| format!("{}_{}", c.label(), i)));
            }
        }
        names
    }
}

/// A deterministic model `ẋ = F(t, x)`.
pub trait VectorField {
    fn name(&self) -> &str;
    fn layout(&self) -> &StateLayout;
    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError>;
}

/// Per-node recovery rates `δ_i` and infection rates `B = [β_ij]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateModel {
    delta: Vec<f64>,
    beta: DMatrix<f64>,
    /// `(j, β_ij)` for every `β_ij > 0`, ascending `j`.
    incoming: Vec<Vec<(usize, f64)>>,
    homogeneous: Option<(f64, f64)>,
}

impl RateModel {
    /// `β_ij = β a_ij`, `δ_i = δ`.
    pub fn homogeneous(g: &Graph, beta: f64, delta: f64) -> Result<Self, MeanFieldError> {
        check_nonnegative("beta", beta)?;
        let n = g.node_count();
        let mut m = Self::from_matrix(g.adjacency() * beta, vec![delta; n])?;
        m.homogeneous = Some((beta, delta));
        Ok(m)
    }

    /// Node-dependent infection: `β_ij = β_i a_ij`.
    pub fn node_infection(g: &Graph, beta: &[f64], delta: &[f64]) -> Result<Self, MeanFieldError> {
        let n = g.node_count();
        check_len("beta", beta.len(), n)?;
        for (i, &b) in beta.iter().enumerate() {
            check_nonnegative(&format!("beta[{i}]"), b)?;
        }
        let mut b = g.adjacency();
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] *= beta[i];
            }
        }
        Self::from_matrix(b, delta.to_vec())
    }

    pub fn from_matrix(beta: DMatrix<f64>, delta: Vec<f64>) -> Result<Self, MeanFieldError> {
        let n = delta.len();
        check_len("beta rows", beta.nrows(), n)?;
        check_len("beta columns", beta.ncols(), n)?;
        for (i, &d) in delta.iter().enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(MeanFieldError::InvalidParameter {
                    name: format!("delta[{i}]"),
                    value: d,
                    reason: "recovery rates must be positive",
                });
            }
        }
        let mut incoming = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let b = beta[(i, j)];
                check_nonnegative(&format!("beta[{i}][{j}]"), b)?;
                if i == j && b != 0.0 {
                    return Err(MeanFieldError::InvalidParameter {
                        name: format!("beta[{i}][{i}]"),
                        value: b,
                        reason: "self-infection is not allowed",
                    });
                }
                if b > 0.0 {
                    incoming[i].push((j, b));
                }
            }
        }
        Ok(Self {
            delta,
            beta,
            incoming,
            homogeneous: None,
        })
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn incoming(&self, i: usize) -> &[(usize, f64)] {
        &self.incoming[i]
    }

    /// `(β, δ)` when built by [`RateModel::homogeneous`].
    pub fn homogeneous_rates(&self) -> Option<(f64, f64)> {
        self.homogeneous
    }

    /// `B − D`.
    pub fn metzler(&self) -> DMatrix<f64> {
        let mut m = self.beta.clone();
        for (i, d) in self.delta.iter().enumerate() {
            m[(i, i)] -= d;
        }
        m
    }

    /// `Σ_j β_ij x_j`.
    pub fn pressure(&self, i: usize, x: &[f64]) -> f64 {
        self.incoming[i].iter().map(|&(j, b)| b * x[j]).sum()
    }

    pub fn is_strongly_connected(&self) -> bool {
        crate::linalg::strongly_connected_components(&self.beta).len() == 1
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<(), MeanFieldError> {
    if got == expected {
        Ok(())
    } else {
        Err(MeanFieldError::Dimension {
            what: what.to_string(),
            expected,
            got,
        })
    }
}

pub(crate) fn check_nonnegative(name: &str, v: f64) -> Result<(), MeanFieldError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(MeanFieldError::InvalidParameter {
            name: name.to_string(),
            value: v,
            reason: "must be finite and nonnegative",
        })
    }
}

/// Sampled solution of a [`VectorField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub layout: StateLayout,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Time series of one compartment at one node.
    pub fn series(&self, c: Compartment, node: usize) -> Option<Vec<f64>> {
        let k = self.layout.index(c, node)?;
        Some(self.states.iter().map(|s| s[k]).collect())
    }

    /// Header `t,<columns>`, one row per sample, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for name in self.layout.column_names() {
            out.push(',');
            out.push_str(&name);
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format_sig(*t));
            for v in s {
                let _ = write!(out, ",{}", format_sig(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Formats with 12 significant digits, `%g` style: plain decimals for
/// moderate magnitudes, scientific otherwise, trailing zeros removed.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(0.5), "0.5");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(10.0), "10");
        assert_eq!(format_sig(1.5e-7), "1.5e-7");
        assert_eq!(format_sig(123456.789), "123456.789");
        assert_eq!(format_sig(-2.0 / 3.0), "-0.666666666667");
    }

    #[test]
    fn layout_indexing() {
        let l = StateLayout::new(&[Compartment::S, Compartment::I], 3, true);
        assert_eq!(l.len(), 6);
        assert_eq!(l.index(Compartment::I, 2), Some(5));
        assert_eq!(l.index(Compartment::R, 0), None);
        assert_eq!(l.column_names()[3], "I_0");
    }

    #[test]
    fn rate_model_validation() {
        let g = Graph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        assert!(RateModel::homogeneous(&g, 1.0, 0.0).is_err());
        assert!(RateModel::homogeneous(&g, -1.0, 1.0).is_err());
        let m = RateModel::node_infection(&g, &[2.0, 3.0], &[1.0, 1.0]).unwrap();
        assert_eq!(m.beta()[(0, 1)], 2.0);
        assert_eq!(m.beta()[(1, 0)], 3.0);
        assert_eq!(m.incoming(0), &[(1, 2.0)]);
        assert!(m.is_strongly_connected());
    }
}
