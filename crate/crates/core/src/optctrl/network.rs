//! Controlled network models: SIR with patching and SIS with
//! node-level recovery rates.

use serde::{Deserialize, Serialize};

use super::{
    check_horizon, check_weight, forward_backward_sweep, ControlError, ControlledSystem,
    FbsOptions, FbsResult, SnapMode,
};
use crate::graph::Graph;
use crate::meanfield::{Compartment, SirPatching, StateLayout};

/// Patching problem on a network: minimise
///
/// ```text
/// J_T = ∫₀ᵀ Σ_i −ℓ_i R_i + c_i I_i + h¹_i R_i u_i + h²_i R_i (S_i + I_i) u_i dt
/// ```
///
/// under the SIR patching dynamics with `u_i ∈ [0, ū_i]` and `β_ij = β a_ij`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirNetworkControl {
    pub beta: f64,
    /// Patch efficiency `π_i` on infected nodes.
    pub efficiency: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Benefit of being patched.
    pub ell: Vec<f64>,
    /// Cost of infection.
    pub c: Vec<f64>,
    /// Cost of patching, per patched node.
    pub h1: Vec<f64>,
    /// Cost of patching, per patched contact.
    pub h2: Vec<f64>,
    pub horizon: f64,
}

impl SirNetworkControl {
    pub fn n(&self) -> usize {
        self.u_max.len()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        check_horizon(self.horizon)?;
        check_weight("beta", self.beta)?;
        let n = self.n();
        for (what, v) in [
            ("efficiency", &self.efficiency),
            ("ell", &self.ell),
            ("c", &self.c),
            ("h1", &self.h1),
            ("h2", &self.h2),
        ] {
            if v.len() != n {
                return Err(ControlError::Dimension {
                    what: what.into(),
                    expected: n,
                    got: v.len(),
                });
            }
            for (i, &x) in v.iter().enumerate() {
                check_weight(&format!("{what}[{i}]"), x)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SirSystem {
    problem: SirNetworkControl,
    model: SirPatching,
    lower: Vec<f64>,
}

impl SirSystem {
    pub fn new(problem: SirNetworkControl, g: &Graph) -> Result<Self, ControlError> {
        problem.validate()?;
        if g.node_count() != problem.n() {
            return Err(ControlError::Dimension {
                what: "graph nodes".into(),
                expected: problem.n(),
                got: g.node_count(),
            });
        }
        let model = SirPatching::from_graph(
            g,
            problem.beta,
            problem.efficiency.clone(),
            problem.u_max.clone(),
        )?;
        Ok(Self {
            lower: vec![0.0; problem.n()],
            problem,
            model,
        })
    }

    pub fn problem(&self) -> &SirNetworkControl {
        &self.problem
    }

    fn forces(&self, inf: &[f64]) -> Vec<f64> {
        (0..self.problem.n())
            .map(|i| self.model.force(i, inf))
            .collect()
    }
}

impl ControlledSystem for SirSystem {
    fn name(&self) -> &str {
        "sir_patching_control"
    }
    fn layout(&self) -> &StateLayout {
        crate::meanfield::VectorField::layout(&self.model)
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
        &self.problem.u_max
    }
    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let n = self.problem.n();
        let (s, rest) = x.split_at(n);
        let (inf, r) = rest.split_at(n);
        let pi = &self.problem.efficiency;
        for i in 0..n {
            let infection = s[i] * self.model.force(i, inf);
            let patch_s = s[i] * r[i] * u[i];
            let patch_i = pi[i] * inf[i] * r[i] * u[i];
            dx[i] = -infection - patch_s;
            dx[n + i] = infection - patch_i;
            dx[2 * n + i] = patch_s + patch_i;
        }
    }
    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let p = &self.problem;
        let n = p.n();
        (0..n)
            .map(|i| {
                let (s, inf, r) = (x[i], x[n + i], x[2 * n + i]);
                -p.ell[i] * r + p.c[i] * inf + p.h1[i] * r * u[i] + p.h2[i] * r * (s + inf) * u[i]
            })
            .sum()
    }
    fn costate_rhs(&self, x: &[f64], u: &[f64], lam: &[f64], dlam: &mut [f64]) {
        let p = &self.problem;
        let n = p.n();
        let (s, rest) = x.split_at(n);
        let (inf, r) = rest.split_at(n);
        let (ls, rest) = lam.split_at(n);
        let (li, lr) = rest.split_at(n);
        let force = self.forces(inf);
        for i in 0..n {
            let pi = p.efficiency[i];
            let ru = r[i] * u[i];
            dlam[i] = -(p.h2[i] * ru + ls[i] * (-force[i] - ru) + li[i] * force[i] + lr[i] * ru);
            let spread: f64 = self
                .model
                .outgoing(i)
                .map(|(k, b)| b * s[k] * (li[k] - ls[k]))
                .sum();
            dlam[n + i] = -(p.c[i] + p.h2[i] * ru - li[i] * pi * ru + lr[i] * pi * ru + spread);
            dlam[2 * n + i] = -(-p.ell[i] + p.h1[i] * u[i] + p.h2[i] * (s[i] + inf[i]) * u[i]
                - ls[i] * s[i] * u[i]
                - li[i] * pi * inf[i] * u[i]
                + lr[i] * (s[i] * u[i] + pi * inf[i] * u[i]));
        }
    }
    fn switching(&self, x: &[f64], lam: &[f64], sigma: &mut [f64]) {
        let p = &self.problem;
        let n = p.n();
        for i in 0..n {
            let (s, inf, r) = (x[i], x[n + i], x[2 * n + i]);
            let (ls, li, lr) = (lam[i], lam[n + i], lam[2 * n + i]);
            sigma[i] = p.h1[i] * r
                + p.h2[i] * r * (s + inf)
                + s * r * (lr - ls)
                + p.efficiency[i] * inf * r * (lr - li);
        }
    }
    fn snap_mode(&self) -> SnapMode {
        SnapMode::SingleSwitch
    }
}

/// Forward-backward sweep for the patching problem from the state
/// `[S.., I.., R..]`; the schedule is snapped to one switch per node.
pub fn fbs_sir_network(
    problem: &SirNetworkControl,
    x0: &[f64],
    g: &Graph,
    opts: &FbsOptions,
) -> Result<FbsResult, ControlError> {
    let sys = SirSystem::new(problem.clone(), g)?;
    forward_backward_sweep(&sys, x0, opts)
}

/// Network SIS where node `i` buys its recovery rate `δ_i(t) ∈ [δ̲, δ̄]`:
///
/// ```text
/// minimise ∫₀ᵀ Σ_i c_i p_i + d_i δ_i dt,
/// ṗ_i = −δ_i p_i + (1 − p_i) Σ_j β a_ij p_j
/// ```
///
/// No optimality theory is known for this problem; the sweep returns a
/// stationary point of the switching law and nothing more.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SisNetworkControl {
    pub beta: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub horizon: f64,
}

impl SisNetworkControl {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        check_horizon(self.horizon)?;
        check_weight("beta", self.beta)?;
        check_weight("delta_min", self.delta_min)?;
        if !(self.delta_max > self.delta_min && self.delta_max.is_finite()) {
            return Err(ControlError::InvalidParameter {
                name: "delta_max".into(),
                value: self.delta_max,
                reason: "must exceed delta_min",
            });
        }
        if self.d.len() != self.n() {
            return Err(ControlError::Dimension {
                what: "d".into(),
                expected: self.n(),
                got: self.d.len(),
            });
        }
        for (i, (&c, &d)) in self.c.iter().zip(&self.d).enumerate() {
            check_weight(&format!("c[{i}]"), c)?;
            check_weight(&format!("d[{i}]"), d)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SisSystem {
    problem: SisNetworkControl,
    /// `(j, β a_ij)` per node.
    incoming: Vec<Vec<(usize, f64)>>,
    /// `(k, β a_ki)` per node.
    outgoing: Vec<Vec<(usize, f64)>>,
    layout: StateLayout,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SisSystem {
    pub fn new(problem: SisNetworkControl, g: &Graph) -> Result<Self, ControlError> {
        problem.validate()?;
        let n = problem.n();
        if g.node_count() != n {
            return Err(ControlError::Dimension {
                what: "graph nodes".into(),
                expected: n,
                got: g.node_count(),
            });
        }
        let scale = |v: Vec<(usize, f64)>| -> Vec<(usize, f64)> {
            v.into_iter().map(|(j, w)| (j, problem.beta * w)).collect()
        };
        Ok(Self {
            incoming: (0..n).map(|i| scale(g.in_neighbors(i))).collect(),
            outgoing: (0..n).map(|i| scale(g.out_neighbors(i))).collect(),
            layout: StateLayout::new(&[Compartment::I], n, false),
            lower: vec![problem.delta_min; n],
            upper: vec![problem.delta_max; n],
            problem,
        })
    }

    pub fn problem(&self) -> &SisNetworkControl {
        &self.problem
    }

    fn force(&self, i: usize, p: &[f64]) -> f64 {
        self.incoming[i].iter().map(|&(j, b)| b * p[j]).sum()
    }
}

impl ControlledSystem for SisSystem {
    fn name(&self) -> &str {
        "network_sis_control"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn signal(&self) -> &str {
        "delta"
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
        for i in 0..x.len() {
            dx[i] = -u[i] * x[i] + (1.0 - x[i]) * self.force(i, x);
        }
    }
    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let p = &self.problem;
        (0..x.len()).map(|i| p.c[i] * x[i] + p.d[i] * u[i]).sum()
    }
    fn costate_rhs(&self, x: &[f64], u: &[f64], lam: &[f64], dlam: &mut [f64]) {
        for k in 0..x.len() {
            let spread: f64 = self.outgoing[k]
                .iter()
                .map(|&(i, b)| lam[i] * (1.0 - x[i]) * b)
                .sum();
            dlam[k] = -(self.problem.c[k] - lam[k] * (u[k] + self.force(k, x)) + spread);
        }
    }
    fn switching(&self, x: &[f64], lam: &[f64], sigma: &mut [f64]) {
        for k in 0..x.len() {
            sigma[k] = self.problem.d[k] - lam[k] * x[k];
        }
    }
    // Free treatment never raises infection, so ties go to the upper bound.
    fn tie_upper(&self, signal: usize) -> bool {
        self.problem.d[signal] == 0.0
    }
    fn heuristic(&self) -> bool {
        true
    }
}

/// Forward-backward sweep for network SIS with purchasable recovery.
/// The result is flagged heuristic: it is a fixed point of the sweep, with
/// no claim of optimality.
pub fn fbs_sis_network(
    problem: &SisNetworkControl,
    p0: &[f64],
    g: &Graph,
    opts: &FbsOptions,
) -> Result<FbsResult, ControlError> {
    let sys = SisSystem::new(problem.clone(), g)?;
    if let Some((i, &v)) = p0
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(ControlError::InvalidParameter {
            name: format!("p0[{i}]"),
            value: v,
            reason: "must lie in [0, 1]",
        });
    }
    forward_backward_sweep(&sys, p0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{rhs_network_sis, rhs_sir_patching, RateModel};

    fn path3() -> Graph {
        Graph::undirected(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn sir() -> SirNetworkControl {
        SirNetworkControl {
            beta: 0.8,
            efficiency: vec![0.5, 0.7, 0.9],
            u_max: vec![1.0, 0.5, 2.0],
            ell: vec![0.1, 0.2, 0.0],
            c: vec![1.0, 2.0, 1.5],
            h1: vec![0.1, 0.0, 0.2],
            h2: vec![0.3, 0.1, 0.0],
            horizon: 5.0,
        }
    }

    fn sis() -> SisNetworkControl {
        SisNetworkControl {
            beta: 0.7,
            delta_min: 0.2,
            delta_max: 1.0,
            c: vec![1.0, 2.0, 0.5],
            d: vec![0.5, 0.2, 1.0],
            horizon: 5.0,
        }
    }

    const X: [f64; 9] = [0.6, 0.5, 0.3, 0.3, 0.2, 0.4, 0.1, 0.3, 0.3];

    #[test]
    fn sir_dynamics_match_the_patching_model() {
        let g = path3();
        let sys = SirSystem::new(sir(), &g).unwrap();
        let model =
            SirPatching::from_graph(&g, 0.8, vec![0.5, 0.7, 0.9], vec![1.0, 0.5, 2.0]).unwrap();
        let u = [0.3, 0.5, 1.1];
        let mut dx = [0.0; 9];
        sys.dynamics(&X, &u, &mut dx);
        let reference = rhs_sir_patching(&model, &X, &u).unwrap();
        for (a, b) in dx.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// The costate equation and switching function are the gradient of the
    /// Hamiltonian `L + λ·F`, checked by central differences.
    fn check_hamiltonian<S: ControlledSystem>(sys: &S, x: &[f64], u: &[f64], lam: &[f64]) {
        let dim = x.len();
        let ham = |x: &[f64], u: &[f64]| {
            let mut f = vec![0.0; dim];
            sys.dynamics(x, u, &mut f);
            sys.running_cost(x, u) + lam.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut dlam = vec![0.0; dim];
        sys.costate_rhs(x, u, lam, &mut dlam);
        let h = 1e-6;
        for k in 0..dim {
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            xp[k] += h;
            xm[k] -= h;
            let fd = (ham(&xp, u) - ham(&xm, u)) / (2.0 * h);
            assert!(
                (dlam[k] + fd).abs() < 1e-8,
                "costate {k}: {} vs {}",
                dlam[k],
                -fd
            );
        }
        let mut sigma = vec![0.0; u.len()];
        sys.switching(x, lam, &mut sigma);
        for s in 0..u.len() {
            let (mut up, mut um) = (u.to_vec(), u.to_vec());
            up[s] += h;
            um[s] -= h;
            let fd = (ham(x, &up) - ham(x, &um)) / (2.0 * h);
            assert!((sigma[s] - fd).abs() < 1e-8, "switching {s}");
        }
    }

    #[test]
    fn sir_costates_are_hamiltonian_gradients() {
        let sys = SirSystem::new(sir(), &path3()).unwrap();
        let lam = [0.4, -1.0, 0.3, 2.0, 0.5, -0.7, 1.2, -0.2, 0.9];
        check_hamiltonian(&sys, &X, &[0.3, 0.5, 1.1], &lam);
    }

    #[test]
    fn sis_dynamics_and_costates() {
        let g = Graph::new(
            3,
            vec![
                crate::graph::Edge::new(0, 1, 1.0),
                crate::graph::Edge::new(1, 2, 0.5),
                crate::graph::Edge::new(2, 0, 2.0),
                crate::graph::Edge::new(0, 2, 1.0),
            ],
            true,
        )
        .unwrap();
        let sys = SisSystem::new(sis(), &g).unwrap();
        let x = [0.2, 0.6, 0.4];
        let u = [0.3, 0.9, 0.5];
        let mut dx = [0.0; 3];
        sys.dynamics(&x, &u, &mut dx);
        let rates = RateModel::homogeneous(&g, 0.7, 1.0).unwrap();
        let rates = RateModel::from_matrix(rates.beta().clone(), u.to_vec()).unwrap();
        let reference = rhs_network_sis(&x, &rates).unwrap();
        for (a, b) in dx.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-15);
        }
        check_hamiltonian(&sys, &x, &u, &[1.0, -0.5, 2.0]);
    }

    #[test]
    fn dimension_mismatches_are_reported() {
        let mut p = sir();
        p.c.pop();
        assert!(matches!(p.validate(), Err(ControlError::Dimension { .. })));
        let g = Graph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        assert!(SisSystem::new(sis(), &g).is_err());
        let mut q = sis();
        q.delta_max = q.delta_min;
        assert!(q.validate().is_err());
    }
}
