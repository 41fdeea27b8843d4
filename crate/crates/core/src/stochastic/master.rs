//! Exact forward Kolmogorov equation of the network SIS chain.
//!
//! Configurations are bitmasks (bit `i` set when node `i` is infected). The
//! transient distribution is computed by uniformization: with `Λ` the largest
//! exit rate, `P = I + Q/Λ` is stochastic and
//! `p(t) = Σ_k Poisson(k; Λt) P^k p(0)`. Long intervals are split so every
//! Poisson mean stays below 30, which keeps `e^{−Λt}` well away from underflow.

use serde::{Deserialize, Serialize};

use super::StochasticError;
use crate::meanfield::{Compartment, RateModel};

pub const MAX_MASTER_NODES: usize = 12;

const MASS_TOL: f64 = 1e-10;
const MAX_POISSON_MEAN: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    pub times: Vec<f64>,
    /// Full distribution over the `2^n` configurations at each time.
    pub distributions: Vec<Vec<f64>>,
    /// `marginals[k][i] = P(X_i(times[k]) = I)`.
    pub marginals: Vec<Vec<f64>>,
}

impl MasterSolution {
    /// Distribution concentrated on one configuration.
    pub fn point_mass(x0: &[Compartment]) -> Vec<f64> {
        let mut p = vec![0.0; 1 << x0.len()];
        let idx = x0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Compartment::I)
            .fold(0usize, |acc, (i, _)| acc | (1 << i));
        p[idx] = 1.0;
        p
    }
}

struct Generator {
    exit: Vec<f64>,
    /// `(from, to, rate)` for every off-diagonal entry.
    arcs: Vec<(u32, u32, f64)>,
    lambda: f64,
}

impl Generator {
    fn new(rates: &RateModel) -> Self {
        let n = rates.n();
        let states = 1usize << n;
        let mut exit = vec![0.0; states];
        let mut arcs = Vec::with_capacity(states * n);
        let mut x = vec![0.0; n];
        for s in 0..states {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = ((s >> i) & 1) as f64;
            }
            for i in 0..n {
                let bit = 1usize << i;
                let rate = if s & bit != 0 {
                    rates.delta()[i]
                } else {
                    rates.pressure(i, &x)
                };
                if rate > 0.0 {
                    arcs.push((s as u32, (s ^ bit) as u32, rate));
                    exit[s] += rate;
                }
            }
        }
        let lambda = exit.iter().fold(0.0f64, |a, &b| a.max(b));
        Self { exit, arcs, lambda }
    }

    /// `out = P v`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let l = self.lambda;
        for ((o, &p), &e) in out.iter_mut().zip(v).zip(&self.exit) {
            *o = p * (1.0 - e / l);
        }
        for &(s, t, r) in &self.arcs {
            out[t as usize] += v[s as usize] * r / l;
        }
    }

    fn advance(&self, p: &[f64], dt: f64) -> Vec<f64> {
        if dt == 0.0 || self.lambda == 0.0 {
            return p.to_vec();
        }
        let pieces = ((self.lambda * dt) / MAX_POISSON_MEAN).ceil().max(1.0) as usize;
        let h = dt / pieces as f64;
        let a = self.lambda * h;
        let kmax = (a + 10.0 * a.sqrt() + 50.0) as usize;
        let mut cur = p.to_vec();
        let mut v = vec![0.0; p.len()];
        let mut w = vec![0.0; p.len()];
        for _ in 0..pieces {
            v.copy_from_slice(&cur);
            let mut weight = (-a).exp();
            let mut cumulative = weight;
            for (c, &x) in cur.iter_mut().zip(&v) {
                *c = weight * x;
            }
            for k in 1..=kmax {
                self.apply(&v, &mut w);
                std::mem::swap(&mut v, &mut w);
                weight *= a / k as f64;
                cumulative += weight;
                for (c, &x) in cur.iter_mut().zip(&v) {
                    *c += weight * x;
                }
                if 1.0 - cumulative <= 1e-16 {
                    break;
                }
            }
        }
        cur
    }
}

/// Distribution and per-node infection marginals at each of `times`
/// (ascending, nonnegative), starting from `x0_distribution` at `t = 0`.
pub fn exact_master_equation(
    rates: &RateModel,
    x0_distribution: &[f64],
    times: &[f64],
) -> Result<MasterSolution, StochasticError> {
    let n = rates.n();
    if n > MAX_MASTER_NODES {
        return Err(StochasticError::TooLarge {
            n,
            max: MAX_MASTER_NODES,
        });
    }
    let states = 1usize << n;
    if x0_distribution.len() != states {
        return Err(StochasticError::Dimension {
            what: "initial distribution".into(),
            expected: states,
            got: x0_distribution.len(),
        });
    }
    if let Some(bad) = x0_distribution.iter().find(|&&p| !(p >= 0.0)) {
        return Err(StochasticError::InvalidParameter {
            name: "initial distribution".into(),
            value: *bad,
            reason: "probabilities must be nonnegative",
        });
    }
    check_mass(0.0, x0_distribution)?;
    for (k, &t) in times.iter().enumerate() {
        if !(t >= 0.0 && t.is_finite() && (k == 0 || t >= times[k - 1])) {
            return Err(StochasticError::InvalidParameter {
                name: format!("times[{k}]"),
                value: t,
                reason: "times must be finite, nonnegative and nondecreasing",
            });
        }
    }

    let gen = Generator::new(rates);
    let mut p = x0_distribution.to_vec();
    let mut t_prev = 0.0;
    let mut distributions = Vec::with_capacity(times.len());
    let mut marginals = Vec::with_capacity(times.len());
    for &t in times {
        p = gen.advance(&p, t - t_prev);
        t_prev = t;
        check_mass(t, &p)?;
        let mut m = vec![0.0; n];
        for (s, &ps) in p.iter().enumerate() {
            for (i, mi) in m.iter_mut().enumerate() {
                if s >> i & 1 == 1 {
                    *mi += ps;
                }
            }
        }
        marginals.push(m);
        distributions.push(p.clone());
    }
    Ok(MasterSolution {
        times: times.to_vec(),
        distributions,
        marginals,
    })
}

fn check_mass(time: f64, p: &[f64]) -> Result<(), StochasticError> {
    let mass: f64 = p.iter().sum();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(StochasticError::MassDrift { time, mass });
    }
    Ok(())
}
