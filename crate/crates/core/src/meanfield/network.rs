//! Network mean-field models.

use nalgebra::DMatrix;

use super::{
    check_len, check_nonnegative, Compartment, Feedback, MeanFieldError, RateModel, StateLayout,
    VectorField,
};
use crate::graph::Graph;

fn incoming_lists(b: &DMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..b.nrows())
        .map(|i| {
            (0..b.ncols())
                .filter(|&j| b[(i, j)] > 0.0)
                .map(|j| (j, b[(i, j)]))
                .collect()
        })
        .collect()
}

fn weighted_sum(list: &[(usize, f64)], x: &[f64]) -> f64 {
    list.iter().map(|&(j, w)| w * x[j]).sum()
}

/// `ṗ_i = −δ_i p_i + (1 − p_i) Σ_j β_ij p_j`.
pub fn rhs_network_sis(p: &[f64], rates: &RateModel) -> Result<Vec<f64>, MeanFieldError> {
    check_len("state", p.len(), rates.n())?;
    let mut dp = vec![0.0; p.len()];
    sis_into(rates, p, &mut dp);
    Ok(dp)
}

fn sis_into(rates: &RateModel, p: &[f64], dp: &mut [f64]) {
    for i in 0..p.len() {
        dp[i] = -rates.delta()[i] * p[i] + (1.0 - p[i]) * rates.pressure(i, p);
    }
}

/// Heterogeneous network SIS, state `[p_0 .. p_{n-1}]`.
#[derive(Clone, Debug)]
pub struct NetworkSis {
    pub rates: RateModel,
    layout: StateLayout,
}

impl NetworkSis {
    pub fn new(rates: RateModel) -> Self {
        let layout = StateLayout::new(&[Compartment::I], rates.n(), false);
        Self { rates, layout }
    }
}

impl VectorField for NetworkSis {
    fn name(&self) -> &str {
        "network_sis"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        sis_into(&self.rates, x, dx);
        Ok(())
    }
}

/// Meta-population model: node `i` is a well-mixed subpopulation of size
/// `sizes[i]` and `x_i` its infected fraction. The dynamics are those of
/// [`NetworkSis`]; the sizes are carried along for reporting only.
#[derive(Clone, Debug)]
pub struct MetaPopulation {
    pub sis: NetworkSis,
    pub sizes: Vec<f64>,
}

impl MetaPopulation {
    /// `coupling[j][i]` is the rate at which subpopulation `j` infects `i`.
    pub fn new(
        coupling: &DMatrix<f64>,
        delta: Vec<f64>,
        sizes: Vec<f64>,
    ) -> Result<Self, MeanFieldError> {
        check_len("sizes", sizes.len(), delta.len())?;
        for (i, &s) in sizes.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(MeanFieldError::InvalidParameter {
                    name: format!("sizes[{i}]"),
                    value: s,
                    reason: "population sizes must be positive",
                });
            }
        }
        let rates = RateModel::from_matrix(coupling.transpose(), delta)?;
        Ok(Self {
            sis: NetworkSis::new(rates),
            sizes,
        })
    }

    /// Total infected head-count `Σ n_i x_i`.
    pub fn infected_count(&self, x: &[f64]) -> f64 {
        self.sizes.iter().zip(x).map(|(n, x)| n * x).sum()
    }
}

impl VectorField for MetaPopulation {
    fn name(&self) -> &str {
        "metapopulation"
    }
    fn layout(&self) -> &StateLayout {
        self.sis.layout()
    }
    fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        self.sis.derivative(t, x, dx)
    }
}

/// Network SPIS with state `[S.., I.., P..]`.
///
/// Susceptible nodes are infected through `B`, protected nodes through
/// `β0 A`. Node `i` protects itself at rate `f_i(p_i^S, y_i, p_i^P)` where
/// `y_i = Σ_j a_ij p_j^I`. There is no protected-to-susceptible flow.
#[derive(Clone, Debug)]
pub struct NetworkSpis {
    pub rates: RateModel,
    pub beta0: f64,
    pub feedback: Vec<Feedback>,
    adjacency_in: Vec<Vec<(usize, f64)>>,
    layout: StateLayout,
}

impl NetworkSpis {
    pub fn new(
        g: &Graph,
        rates: RateModel,
        beta0: f64,
        feedback: Vec<Feedback>,
    ) -> Result<Self, MeanFieldError> {
        let n = g.node_count();
        check_len("rates", rates.n(), n)?;
        check_len("feedback", feedback.len(), n)?;
        check_nonnegative("beta0", beta0)?;
        let a = g.adjacency();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] > 0.0 && beta0 * a[(i, j)] >= rates.beta()[(i, j)] {
                    return Err(MeanFieldError::InvalidParameter {
                        name: "beta0".into(),
                        value: beta0,
                        reason:
                            "protected nodes must be infected more slowly than susceptible ones",
                    });
                }
            }
        }
        Ok(Self {
            adjacency_in: incoming_lists(&a),
            layout: StateLayout::new(&[Compartment::S, Compartment::I, Compartment::P], n, true),
            rates,
            beta0,
            feedback,
        })
    }
}

pub fn rhs_network_spis(model: &NetworkSpis, x: &[f64]) -> Result<Vec<f64>, MeanFieldError> {
    check_len("state", x.len(), model.layout.len())?;
    let mut dx = vec![0.0; x.len()];
    model.derivative(0.0, x, &mut dx)?;
    Ok(dx)
}

impl VectorField for NetworkSpis {
    fn name(&self) -> &str {
        "network_spis"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        let n = self.rates.n();
        let (s, rest) = x.split_at(n);
        let (inf, p) = rest.split_at(n);
        for i in 0..n {
            let y = weighted_sum(&self.adjacency_in[i], inf);
            let f = self.feedback[i].evaluate(&format!("f_{i}"), s[i], y, p[i])?;
            let infect_s = s[i] * self.rates.pressure(i, inf);
            let infect_p = self.beta0 * p[i] * y;
            let recover = self.rates.delta()[i] * inf[i];
            let protect = s[i] * f;
            dx[i] = -infect_s + recover - protect;
            dx[n + i] = infect_s + infect_p - recover;
            dx[2 * n + i] = protect - infect_p;
        }
        Ok(())
    }
}

/// Two competing, mutually exclusive infections, state `[S.., I1.., I2..]`,
/// each spreading over its own graph.
#[derive(Clone, Debug)]
pub struct Bivirus {
    pub first: RateModel,
    pub second: RateModel,
    layout: StateLayout,
}

impl Bivirus {
    /// Node-dependent rates: `β^k_ij = β^k_i a^k_ij`.
    pub fn new(
        g1: &Graph,
        g2: &Graph,
        beta1: &[f64],
        delta1: &[f64],
        beta2: &[f64],
        delta2: &[f64],
    ) -> Result<Self, MeanFieldError> {
        check_len("second graph", g2.node_count(), g1.node_count())?;
        Self::from_rates(
            RateModel::node_infection(g1, beta1, delta1)?,
            RateModel::node_infection(g2, beta2, delta2)?,
        )
    }

    pub fn from_rates(first: RateModel, second: RateModel) -> Result<Self, MeanFieldError> {
        check_len("second rate model", second.n(), first.n())?;
        let layout = StateLayout::new(
            &[Compartment::S, Compartment::I1, Compartment::I2],
            first.n(),
            true,
        );
        Ok(Self {
            first,
            second,
            layout,
        })
    }
}

pub fn rhs_bivirus(model: &Bivirus, x: &[f64]) -> Result<Vec<f64>, MeanFieldError> {
    check_len("state", x.len(), model.layout.len())?;
    let mut dx = vec![0.0; x.len()];
    model.derivative(0.0, x, &mut dx)?;
    Ok(dx)
}

impl VectorField for Bivirus {
    fn name(&self) -> &str {
        "bivirus"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        let n = self.first.n();
        let (s, rest) = x.split_at(n);
        let (i1, i2) = rest.split_at(n);
        for i in 0..n {
            let a = s[i] * self.first.pressure(i, i1);
            let b = s[i] * self.second.pressure(i, i2);
            let r1 = self.first.delta()[i] * i1[i];
            let r2 = self.second.delta()[i] * i2[i];
            dx[i] = -a - b + r1 + r2;
            dx[n + i] = a - r1;
            dx[2 * n + i] = b - r2;
        }
        Ok(())
    }
}

/// Networked SIR with patching control, state `[S.., I.., R..]`:
///
/// ```text
/// Ṡ_i = −S_i Σ_j β_ij I_j − S_i R_i u_i
/// İ_i =  S_i Σ_j β_ij I_j − π_i I_i R_i u_i
/// Ṙ_i =  S_i R_i u_i + π_i I_i R_i u_i
/// ```
///
/// Patches spread from removed (patched) nodes, so the control acts through
/// the node's own removed fraction `R_i`; `π_i ∈ [0, 1]` is the efficiency of
/// patching an infected node.
#[derive(Clone, Debug)]
pub struct SirPatching {
    pub beta: DMatrix<f64>,
    pub efficiency: Vec<f64>,
    pub u_max: Vec<f64>,
    control: Vec<f64>,
    incoming: Vec<Vec<(usize, f64)>>,
    layout: StateLayout,
}

impl SirPatching {
    pub fn new(
        beta: DMatrix<f64>,
        efficiency: Vec<f64>,
        u_max: Vec<f64>,
    ) -> Result<Self, MeanFieldError> {
        let n = beta.nrows();
        check_len("beta columns", beta.ncols(), n)?;
        check_len("efficiency", efficiency.len(), n)?;
        check_len("u_max", u_max.len(), n)?;
        for i in 0..n {
            for j in 0..n {
                check_nonnegative(&format!("beta[{i}][{j}]"), beta[(i, j)])?;
            }
            let pi = efficiency[i];
            if !(0.0..=1.0).contains(&pi) {
                return Err(MeanFieldError::InvalidParameter {
                    name: format!("efficiency[{i}]"),
                    value: pi,
                    reason: "must lie in [0, 1]",
                });
            }
            if !(u_max[i] > 0.0 && u_max[i].is_finite()) {
                return Err(MeanFieldError::InvalidParameter {
                    name: format!("u_max[{i}]"),
                    value: u_max[i],
                    reason: "control bound must be positive",
                });
            }
        }
        Ok(Self {
            incoming: incoming_lists(&beta),
            layout: StateLayout::new(&[Compartment::S, Compartment::I, Compartment::R], n, true),
            control: vec![0.0; n],
            beta,
            efficiency,
            u_max,
        })
    }

    /// Homogeneous infection `β_ij = β a_ij`.
    pub fn from_graph(
        g: &Graph,
        beta: f64,
        efficiency: Vec<f64>,
        u_max: Vec<f64>,
    ) -> Result<Self, MeanFieldError> {
        check_nonnegative("beta", beta)?;
        Self::new(g.adjacency() * beta, efficiency, u_max)
    }

    pub fn n(&self) -> usize {
        self.beta.nrows()
    }

    pub fn control(&self) -> &[f64] {
        &self.control
    }

    pub fn set_control(&mut self, u: &[f64]) -> Result<(), MeanFieldError> {
        check_len("control", u.len(), self.n())?;
        for (node, (&v, &upper)) in u.iter().zip(&self.u_max).enumerate() {
            if !(0.0..=upper).contains(&v) {
                return Err(MeanFieldError::ControlOutOfBounds {
                    node,
                    value: v,
                    upper,
                });
            }
        }
        self.control.copy_from_slice(u);
        Ok(())
    }

    /// `Σ_j β_ij I_j`.
    pub fn force(&self, i: usize, inf: &[f64]) -> f64 {
        weighted_sum(&self.incoming[i], inf)
    }

    /// Nodes `k` with `β_ki > 0`, i.e. those infected by `i`.
    pub fn outgoing(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n())
            .filter(move |&k| self.beta[(k, i)] > 0.0)
            .map(move |k| (k, self.beta[(k, i)]))
    }
}

pub fn rhs_sir_patching(
    model: &SirPatching,
    x: &[f64],
    u: &[f64],
) -> Result<Vec<f64>, MeanFieldError> {
    check_len("state", x.len(), model.layout.len())?;
    let mut m = model.clone();
    m.set_control(u)?;
    let mut dx = vec![0.0; x.len()];
    m.derivative(0.0, x, &mut dx)?;
    Ok(dx)
}

impl VectorField for SirPatching {
    fn name(&self) -> &str {
        "sir_patching"
    }
    fn layout(&self) -> &StateLayout {
        &self.layout
    }
    fn derivative(&self, _t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), MeanFieldError> {
        let n = self.n();
        let (s, rest) = x.split_at(n);
        let (inf, r) = rest.split_at(n);
        for i in 0..n {
            let infection = s[i] * self.force(i, inf);
            let patch_s = s[i] * r[i] * self.control[i];
            let patch_i = self.efficiency[i] * inf[i] * r[i] * self.control[i];
            dx[i] = -infection - patch_s;
            dx[n + i] = infection - patch_i;
            dx[2 * n + i] = patch_s + patch_i;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;

    fn pair() -> Graph {
        Graph::undirected(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn network_sis_hand_values() {
        let r = RateModel::homogeneous(&pair(), 1.0, 1.0).unwrap();
        assert_eq!(rhs_network_sis(&[1.0, 0.0], &r).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(rhs_network_sis(&[0.0, 0.0], &r).unwrap(), vec![0.0, 0.0]);
        assert!(rhs_network_sis(&[0.0], &r).is_err());
    }

    #[test]
    fn matrix_form_agrees() {
        let g = Graph::generate(&GraphKind::DirectedErdosRenyi { p: 0.5, seed: 9 }, 7).unwrap();
        let betas: Vec<f64> = (0..7).map(|i| 0.2 + 0.1 * i as f64).collect();
        let deltas: Vec<f64> = (0..7).map(|i| 0.5 + 0.05 * i as f64).collect();
        let r = RateModel::node_infection(&g, &betas, &deltas).unwrap();
        let p: Vec<f64> = (0..7).map(|i| (i as f64 * 0.37).fract()).collect();
        let pv = nalgebra::DVector::from_column_slice(&p);
        let lin = r.metzler() * &pv;
        let dp = rhs_network_sis(&p, &r).unwrap();
        for i in 0..7 {
            let h: f64 = -(0..7).map(|j| r.beta()[(i, j)] * p[i] * p[j]).sum::<f64>();
            assert!((dp[i] - (lin[i] + h)).abs() < 1e-14);
        }
    }

    #[test]
    fn spis_reduces_to_sis() {
        let g = Graph::generate(&GraphKind::Path, 3).unwrap();
        let rates = RateModel::homogeneous(&g, 0.8, 0.5).unwrap();
        let m = NetworkSpis::new(&g, rates.clone(), 0.2, vec![Feedback::ZERO; 3]).unwrap();
        let inf = [0.2, 0.5, 0.1];
        let x = [0.8, 0.5, 0.9, 0.2, 0.5, 0.1, 0.0, 0.0, 0.0];
        let dx = rhs_network_spis(&m, &x).unwrap();
        let sis = rhs_network_sis(&inf, &rates).unwrap();
        for i in 0..3 {
            assert!((dx[3 + i] - sis[i]).abs() < 1e-15);
            assert_eq!(dx[6 + i], 0.0);
        }
    }

    #[test]
    fn spis_path_hand_values() {
        // path 0 - 1 - 2, beta 1, delta 0.5, beta0 0.25, f_i = 2 y_i
        let g = Graph::generate(&GraphKind::Path, 3).unwrap();
        let rates = RateModel::homogeneous(&g, 1.0, 0.5).unwrap();
        let fb = vec![Feedback::LinearInfected { gain: 2.0 }; 3];
        let m = NetworkSpis::new(&g, rates, 0.25, fb).unwrap();
        let x = [0.5, 0.4, 0.6, 0.2, 0.4, 0.1, 0.3, 0.2, 0.3];
        let dx = rhs_network_spis(&m, &x).unwrap();
        // node 1: y = 0.2 + 0.1 = 0.3, S = 0.4, P = 0.2, I = 0.4
        // infect_s = 0.12, infect_p = 0.25*0.2*0.3 = 0.015, recover = 0.2, protect = 0.4*0.6 = 0.24
        assert!((dx[1] - (-0.12 + 0.2 - 0.24)).abs() < 1e-15);
        assert!((dx[4] - (0.12 + 0.015 - 0.2)).abs() < 1e-15);
        assert!((dx[7] - (0.24 - 0.015)).abs() < 1e-15);
        for i in 0..3 {
            assert!((dx[i] + dx[3 + i] + dx[6 + i]).abs() < 1e-14);
        }
        // beta0 = 0: protected nodes receive no infection
        let m0 = NetworkSpis::new(&g, m.rates.clone(), 0.0, m.feedback.clone()).unwrap();
        let d0 = rhs_network_spis(&m0, &x).unwrap();
        assert!(d0[6..].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn spis_rejects_fast_protected_infection() {
        let g = pair();
        let rates = RateModel::homogeneous(&g, 1.0, 1.0).unwrap();
        assert!(NetworkSpis::new(&g, rates, 1.0, vec![Feedback::ZERO; 2]).is_err());
    }

    #[test]
    fn bivirus_reductions() {
        let g1 = Graph::generate(&GraphKind::Path, 3).unwrap();
        let g2 = Graph::generate(&GraphKind::Complete, 3).unwrap();
        let b1 = [0.5, 1.0, 1.5];
        let d1 = [1.0, 0.7, 0.4];
        let m = Bivirus::new(&g1, &g2, &b1, &d1, &[0.3; 3], &[0.9; 3]).unwrap();
        let i1 = [0.1, 0.3, 0.2];
        let x = [0.9, 0.7, 0.8, 0.1, 0.3, 0.2, 0.0, 0.0, 0.0];
        let dx = rhs_bivirus(&m, &x).unwrap();
        let sis = rhs_network_sis(&i1, &RateModel::node_infection(&g1, &b1, &d1).unwrap()).unwrap();
        for i in 0..3 {
            assert!((dx[3 + i] - sis[i]).abs() < 1e-15);
        }
        // no susceptibles: pure decay
        let x = [0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let dx = rhs_bivirus(&m, &x).unwrap();
        for i in 0..3 {
            assert!((dx[3 + i] + d1[i] * 0.5).abs() < 1e-15);
            assert!((dx[6 + i] + 0.9 * 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn bivirus_hand_values() {
        let g1 = Graph::generate(&GraphKind::Path, 3).unwrap();
        let g2 = Graph::generate(&GraphKind::Complete, 3).unwrap();
        let m = Bivirus::new(&g1, &g2, &[1.0; 3], &[0.5; 3], &[2.0; 3], &[0.25; 3]).unwrap();
        let x = [0.5, 0.4, 0.6, 0.2, 0.3, 0.1, 0.3, 0.3, 0.3];
        let dx = rhs_bivirus(&m, &x).unwrap();
        // node 0: I1 neighbours {1}: 0.3; I2 neighbours {1,2}: 0.6
        // a = 0.5*1*0.3 = 0.15, b = 0.5*2*0.6 = 0.6, r1 = 0.1, r2 = 0.075
        assert!((dx[0] - (-0.15 - 0.6 + 0.1 + 0.075)).abs() < 1e-15);
        assert!((dx[3] - (0.15 - 0.1)).abs() < 1e-15);
        assert!((dx[6] - (0.6 - 0.075)).abs() < 1e-15);
    }

    #[test]
    fn patching_terms() {
        let m = SirPatching::from_graph(&pair(), 2.0, vec![0.5, 1.0], vec![1.0, 1.0]).unwrap();
        let x = [0.6, 0.3, 0.3, 0.4, 0.1, 0.3];
        // u = 0: plain SIR flow without recovery
        let d = rhs_sir_patching(&m, &x, &[0.0, 0.0]).unwrap();
        assert!((d[0] + 0.6 * 2.0 * 0.4).abs() < 1e-15);
        assert_eq!(d[4], 0.0);
        // hand evaluation, u = (1, 0.5)
        let d = rhs_sir_patching(&m, &x, &[1.0, 0.5]).unwrap();
        // node 0: inf = 0.48, patch_s = 0.6*0.1 = 0.06, patch_i = 0.5*0.3*0.1 = 0.015
        assert!((d[0] - (-0.48 - 0.06)).abs() < 1e-15);
        assert!((d[2] - (0.48 - 0.015)).abs() < 1e-15);
        assert!((d[4] - 0.075).abs() < 1e-15);
        // node 1: inf = 0.3*2*0.3 = 0.18, patch_s = 0.3*0.3*0.5 = 0.045, patch_i = 0.4*0.3*0.5 = 0.06
        assert!((d[1] - (-0.18 - 0.045)).abs() < 1e-15);
        assert!((d[3] - (0.18 - 0.06)).abs() < 1e-15);
        assert!((d[5] - 0.105).abs() < 1e-15);
        // no removed mass: control does nothing
        let y = [0.5, 0.5, 0.5, 0.5, 0.0, 0.0];
        assert_eq!(
            rhs_sir_patching(&m, &y, &[1.0, 1.0]).unwrap(),
            rhs_sir_patching(&m, &y, &[0.0, 0.0]).unwrap()
        );
        assert!(matches!(
            rhs_sir_patching(&m, &x, &[2.0, 0.0]),
            Err(MeanFieldError::ControlOutOfBounds { node: 0, .. })
        ));
    }

    #[test]
    fn metapopulation_transposes_coupling() {
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = 0.7; // 0 infects 1
        let m = MetaPopulation::new(&c, vec![1.0, 1.0], vec![100.0, 50.0]).unwrap();
        let mut dx = [0.0; 2];
        m.derivative(0.0, &[0.5, 0.0], &mut dx).unwrap();
        assert!((dx[1] - 0.35).abs() < 1e-15);
        assert_eq!(m.infected_count(&[0.5, 0.2]), 60.0);
    }
}
