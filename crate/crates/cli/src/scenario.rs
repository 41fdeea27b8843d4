//! Scenario files: one JSON document per command.
//!
//! ```json
//! {
//!   "command": "threshold",
//!   "graph": { "generate": { "kind": "complete", "n": 5 } },
//!   "beta": 0.2,
//!   "delta": 1.0
//! }
//! ```
//!
//! Graphs are either generated (`{"generate": {"kind": ..., "n": ...}}`) or
//! read from an edge list (`{"edge_list": "path/relative/to/scenario"}`).
//! Per-node quantities accept a single number or one value per node.

use std::path::{Path, PathBuf};

use epinet::allocation::{AllocationProblem, CostCurve};
use epinet::graph::{load_edge_list, Graph, GraphKind};
use epinet::meanfield::{Compartment, RateModel};
use epinet::optctrl::ControlProblem;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Scenario {
    Threshold(ThresholdScenario),
    Simulate(SimulateScenario),
    Meanfield(MeanfieldScenario),
    Allocate(AllocateScenario),
    Optctrl(OptctrlScenario),
    Compare(CompareScenario),
}

impl Scenario {
    pub fn command(&self) -> &'static str {
        match self {
            Self::Threshold(_) => "threshold",
            Self::Simulate(_) => "simulate",
            Self::Meanfield(_) => "meanfield",
            Self::Allocate(_) => "allocate",
            Self::Optctrl(_) => "optctrl",
            Self::Compare(_) => "compare",
        }
    }

    /// Replaces the Monte Carlo seed, for commands that have one.
    pub fn override_seed(&mut self, seed: u64) {
        match self {
            Self::Simulate(s) => s.seed = seed,
            Self::Compare(s) => s.seed = seed,
            _ => {}
        }
    }

    /// Reads and parses a scenario file. Edge-list paths are resolved
    /// against the scenario's directory and must exist.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::invalid("scenario", format!("cannot read {}: {e}", path.display()))
        })?;
        let mut s: Scenario = serde_json::from_str(&text)
            .map_err(|e| CliError::invalid("scenario", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for g in s.graphs_mut() {
            if let GraphSource::EdgeList(p) = g {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.is_file() {
                    return Err(CliError::invalid(
                        "graph.edge_list",
                        format!("{} does not exist", p.display()),
                    ));
                }
            }
        }
        Ok(s)
    }

    fn graphs_mut(&mut self) -> Vec<&mut GraphSource> {
        match self {
            Self::Threshold(s) => vec![&mut s.graph],
            Self::Simulate(s) => vec![&mut s.graph],
            Self::Meanfield(s) => match &mut s.model {
                MeanfieldModel::NetworkSis { graph, .. } => vec![graph],
                _ => vec![],
            },
            Self::Allocate(s) => vec![&mut s.graph],
            Self::Optctrl(s) => s.graph.iter_mut().collect(),
            Self::Compare(s) => vec![&mut s.graph],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Generate(GeneratorSpec),
    EdgeList(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    #[serde(flatten)]
    pub kind: GraphKind,
}

impl GraphSource {
    pub fn build(&self, field: &str) -> Result<Graph, CliError> {
        match self {
            GraphSource::Generate(g) => {
                Graph::generate(&g.kind, g.n).map_err(|e| CliError::invalid(field, e.to_string()))
            }
            GraphSource::EdgeList(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::invalid(field, format!("{}: {e}", p.display())))?;
                load_edge_list(&text)
                    .map_err(|e| CliError::invalid(field, format!("{}: {e}", p.display())))
            }
        }
    }
}

/// One value for every node, or a list with one entry per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode<T> {
    Uniform(T),
    Each(Vec<T>),
}

impl<T: Clone> PerNode<T> {
    pub fn resolve(&self, field: &str, n: usize) -> Result<Vec<T>, CliError> {
        match self {
            PerNode::Uniform(v) => Ok(vec![v.clone(); n]),
            PerNode::Each(v) if v.len() == n => Ok(v.clone()),
            PerNode::Each(v) => Err(CliError::invalid(
                field,
                format!("has {} entries but the graph has {n} nodes", v.len()),
            )),
        }
    }

    fn uniform(&self) -> Option<&T> {
        match self {
            PerNode::Uniform(v) => Some(v),
            PerNode::Each(_) => None,
        }
    }
}

/// Initial infection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Every node infected.
    All,
    /// These nodes infected, the rest susceptible.
    Infected(Vec<usize>),
    /// Infected probability per node (mean-field models only).
    Fraction(PerNode<f64>),
}

impl Initial {
    pub fn probabilities(&self, field: &str, n: usize) -> Result<Vec<f64>, CliError> {
        let p = match self {
            Initial::Fraction(f) => f.resolve(field, n)?,
            _ => self
                .compartments(field, n)?
                .iter()
                .map(|&c| if c == Compartment::I { 1.0 } else { 0.0 })
                .collect(),
        };
        for (i, &x) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(CliError::invalid(
                    &format!("{field}.fraction[{i}]"),
                    format!("{x} is not a probability"),
                ));
            }
        }
        Ok(p)
    }

    pub fn compartments(&self, field: &str, n: usize) -> Result<Vec<Compartment>, CliError> {
        match self {
            Initial::All => Ok(vec![Compartment::I; n]),
            Initial::Infected(nodes) => {
                let mut x = vec![Compartment::S; n];
                for &i in nodes {
                    if i >= n {
                        return Err(CliError::invalid(
                            &format!("{field}.infected"),
                            format!("node {i} does not exist (n = {n})"),
                        ));
                    }
                    x[i] = Compartment::I;
                }
                Ok(x)
            }
            Initial::Fraction(_) => Err(CliError::invalid(
                field,
                "stochastic models need `all` or an `infected` node list".into(),
            )),
        }
    }
}

/// Rate model from scalar `β`, `δ` (homogeneous) or per-node values
/// (`β_ij = β_i a_ij`).
pub fn build_rates(
    g: &Graph,
    beta: &PerNode<f64>,
    delta: &PerNode<f64>,
) -> Result<RateModel, CliError> {
    let n = g.node_count();
    beta.check("beta", |x| x >= 0.0, "must be finite and nonnegative")?;
    delta.check("delta", |x| x > 0.0, "must be finite and positive")?;
    let b = beta.resolve("beta", n)?;
    let d = delta.resolve("delta", n)?;
    let model = match homogeneous(beta, delta) {
        Some((b, d)) => RateModel::homogeneous(g, b, d),
        None => RateModel::node_infection(g, &b, &d),
    };
    model.map_err(|e| CliError::invalid("beta", e.to_string()))
}

pub fn homogeneous(beta: &PerNode<f64>, delta: &PerNode<f64>) -> Option<(f64, f64)> {
    Some((*beta.uniform()?, *delta.uniform()?))
}

impl PerNode<f64> {
    /// Checks every value, naming the offending entry.
    pub fn check(
        &self,
        field: &str,
        ok: impl Fn(f64) -> bool,
        reason: &str,
    ) -> Result<(), CliError> {
        let bad = |path: String, x: f64| Err(CliError::invalid(&path, format!("{x} {reason}")));
        match self {
            PerNode::Uniform(x) if !(x.is_finite() && ok(*x)) => bad(field.to_string(), *x),
            PerNode::Each(v) => match v.iter().position(|x| !(x.is_finite() && ok(*x))) {
                Some(i) => bad(format!("{field}[{i}]"), v[i]),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

pub fn check_positive(field: &str, x: f64) -> Result<(), CliError> {
    PerNode::Uniform(x).check(field, |v| v > 0.0, "must be finite and positive")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdScenario {
    pub graph: GraphSource,
    pub beta: PerNode<f64>,
    pub delta: PerNode<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateScenario {
    pub graph: GraphSource,
    pub beta: PerNode<f64>,
    pub delta: PerNode<f64>,
    pub initial: Initial,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Censoring time; defaults to `10 (ln N + 1) / mean δ`.
    #[serde(default)]
    pub t_cap: Option<f64>,
    /// Times at which to estimate per-node infection probabilities.
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// Also write the event log of the first run.
    #[serde(default)]
    pub events: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldScenario {
    pub model: MeanfieldModel,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Keep every k-th integration step in the CSV.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanfieldModel {
    PopulationSis {
        beta: f64,
        delta: f64,
        i0: f64,
    },
    PopulationSir {
        beta: f64,
        delta: f64,
        i0: f64,
    },
    NetworkSis {
        graph: GraphSource,
        beta: PerNode<f64>,
        delta: PerNode<f64>,
        initial: Initial,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateScenario {
    pub graph: GraphSource,
    pub beta_min: PerNode<f64>,
    pub beta_max: PerNode<f64>,
    pub delta_min: PerNode<f64>,
    pub delta_max: PerNode<f64>,
    pub beta_cost: PerNode<CostCurve>,
    pub delta_cost: PerNode<CostCurve>,
    pub budget: f64,
}

impl AllocateScenario {
    pub fn problem(&self, g: Graph) -> Result<AllocationProblem, CliError> {
        let n = g.node_count();
        Ok(AllocationProblem {
            beta_min: self.beta_min.resolve("beta_min", n)?,
            beta_max: self.beta_max.resolve("beta_max", n)?,
            delta_min: self.delta_min.resolve("delta_min", n)?,
            delta_max: self.delta_max.resolve("delta_max", n)?,
            beta_cost: self.beta_cost.resolve("beta_cost", n)?,
            delta_cost: self.delta_cost.resolve("delta_cost", n)?,
            budget: self.budget,
            graph: g,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptctrlScenario {
    pub problem: ControlProblem,
    /// Required by the network problems.
    #[serde(default)]
    pub graph: Option<GraphSource>,
    /// `[p]` for the population problem, `[S.., I.., R..]` for the SIR
    /// network and `[p..]` for the SIS network.
    pub x0: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareScenario {
    pub graph: GraphSource,
    pub beta: PerNode<f64>,
    pub delta: PerNode<f64>,
    pub initial: Initial,
    pub horizon: f64,
    /// Number of equally spaced sample times in `(0, horizon]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Optional SSA overlay; 0 skips it.
    #[serde(default)]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_record_every() -> usize {
    10
}

fn default_samples() -> usize {
    20
}
