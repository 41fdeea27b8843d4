//! Grid-search allocation for tiny instances.
//!
//! `λmax(B − D)` is nondecreasing in every `β_i` and nonincreasing in every
//! `δ_i`, so spending more never hurts. The search therefore grids every
//! costly control but the last and gives the last one whatever budget is
//! left, obtained by inverting its cost curve. Controls with no cost sit at
//! their most effective bound.

use serde::{Deserialize, Serialize};

use super::{AllocationError, AllocationProblem, CostCurve};
use crate::linalg::metzler_lambda_max_charpoly;
use crate::parallel::map_range;

pub const MAX_BRUTE_FORCE_NODES: usize = 4;
pub const MAX_BRUTE_FORCE_DENSITY: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub lambda_max: f64,
    /// `λmax + φ`, comparable with the GP objective.
    pub lambda_star: f64,
    pub spend: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Control {
    node: usize,
    is_beta: bool,
    lo: f64,
    hi: f64,
    curve: CostCurve,
}

impl Control {
    /// GP coordinate of a natural value and the zero-spend GP coordinate.
    fn cost(&self, v: f64, phi: f64, p: &AllocationProblem) -> f64 {
        if self.is_beta {
            self.curve.cost(v, p.beta_max[self.node])
        } else {
            self.curve.cost(phi - v, phi - p.delta_min[self.node])
        }
    }

    /// Most effective value affordable with `spend`.
    fn afford(&self, spend: f64, phi: f64, p: &AllocationProblem) -> f64 {
        if self.is_beta {
            let x = self
                .curve
                .inverse(spend, p.beta_max[self.node])
                .unwrap_or(self.lo);
            x.clamp(self.lo, self.hi)
        } else {
            let x = self
                .curve
                .inverse(spend, phi - p.delta_min[self.node])
                .unwrap_or(phi - self.hi);
            (phi - x).clamp(self.lo, self.hi)
        }
    }
}

/// Best allocation over a `grid_density`-point grid per control, refined
/// twice around the incumbent (window of ±2 spacings).
pub fn brute_force_allocation(
    problem: &AllocationProblem,
    grid_density: usize,
) -> Result<BruteForceResult, AllocationError> {
    problem.validate()?;
    let n = problem.n();
    if n > MAX_BRUTE_FORCE_NODES {
        return Err(AllocationError::TooLarge {
            what: "nodes",
            value: n,
            max: MAX_BRUTE_FORCE_NODES,
        });
    }
    if grid_density > MAX_BRUTE_FORCE_DENSITY {
        return Err(AllocationError::TooLarge {
            what: "grid density",
            value: grid_density,
            max: MAX_BRUTE_FORCE_DENSITY,
        });
    }
    if grid_density < 2 {
        return Err(AllocationError::InvalidParameter {
            name: "grid_density".into(),
            value: grid_density as f64,
            reason: "need at least two points per control",
        });
    }
    let phi = problem.phi();
    let (mut beta, mut delta) = problem.full_spend();
    let mut controls = Vec::new();
    for i in 0..n {
        let b = Control {
            node: i,
            is_beta: true,
            lo: problem.beta_min[i],
            hi: problem.beta_max[i],
            curve: problem.beta_cost[i],
        };
        let d = Control {
            node: i,
            is_beta: false,
            lo: problem.delta_min[i],
            hi: problem.delta_max[i],
            curve: problem.delta_cost[i],
        };
        for c in [b, d] {
            if c.lo < c.hi && !c.curve.is_free() {
                controls.push(c);
            }
        }
    }

    let search = Search {
        problem,
        phi,
        controls: &controls,
        base_beta: &beta,
        base_delta: &delta,
    };
    let mut windows: Vec<(f64, f64)> = controls.iter().map(|c| (c.lo, c.hi)).collect();
    let mut evaluations = 0;
    let mut best = None;
    for pass in 0..3 {
        let (point, lam, evals) = search.run(&windows, grid_density);
        evaluations += evals;
        if let Some(p) = point.clone() {
            best = Some((p, lam));
        }
        if pass < 2 {
            if let Some((p, _)) = &best {
                for (w, (c, &v)) in windows.iter_mut().zip(controls.iter().zip(p.iter())) {
                    let h = (w.1 - w.0) / (grid_density - 1) as f64;
                    *w = ((v - 2.0 * h).max(c.lo), (v + 2.0 * h).min(c.hi));
                }
            }
        }
    }
    let (values, _) = best.expect("zero-spend corner is always feasible");
    for (c, &v) in controls.iter().zip(&values) {
        if c.is_beta {
            beta[c.node] = v;
        } else {
            delta[c.node] = v;
        }
    }
    let lambda_max = metzler_lambda_max_charpoly(&problem.metzler(&beta, &delta));
    Ok(BruteForceResult {
        spend: problem.spend(&beta, &delta),
        beta,
        delta,
        lambda_max,
        lambda_star: lambda_max + phi,
        evaluations,
    })
}

struct Search<'a> {
    problem: &'a AllocationProblem,
    phi: f64,
    controls: &'a [Control],
    base_beta: &'a [f64],
    base_delta: &'a [f64],
}

impl Search<'_> {
    /// Best point over the grid on `windows`; the last control is derived
    /// from the remaining budget rather than gridded.
    fn run(&self, windows: &[(f64, f64)], density: usize) -> (Option<Vec<f64>>, f64, usize) {
        let d = self.controls.len();
        if d == 0 {
            let lam = self.lambda(&[]);
            return (Some(Vec::new()), lam, 1);
        }
        let gridded = d - 1;
        let grid = |c: usize, k: usize| {
            let (lo, hi) = windows[c];
            lo + (hi - lo) * k as f64 / (density - 1) as f64
        };
        // outermost gridded axis fans out; the rest are enumerated per slice
        let outer = if gridded == 0 { 1 } else { density };
        let inner_count = density.pow(gridded.saturating_sub(1) as u32);
        let slices = map_range(outer, |k0| {
            let mut best: Option<(Vec<f64>, f64)> = None;
            let mut evals = 0;
            let mut values = vec![0.0; d];
            for idx in 0..inner_count {
                let mut spent = 0.0;
                let mut rest = idx;
                for c in 0..gridded {
                    let k = if c == 0 {
                        k0
                    } else {
                        let k = rest % density;
                        rest /= density;
                        k
                    };
                    values[c] = grid(c, k);
                    spent += self.controls[c].cost(values[c], self.phi, self.problem);
                }
                let left = self.problem.budget - spent;
                if left < -1e-12 * self.problem.budget.max(1.0) {
                    continue;
                }
                let last = &self.controls[d - 1];
                values[d - 1] = last.afford(left.max(0.0), self.phi, self.problem);
                let lam = self.lambda(&values);
                evals += 1;
                if best.as_ref().is_none_or(|(_, b)| lam < *b) {
                    best = Some((values.clone(), lam));
                }
            }
            (best, evals)
        });
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut evals = 0;
        for (b, e) in slices {
            evals += e;
            if let Some((v, lam)) = b {
                if best.as_ref().is_none_or(|(_, bl)| lam < *bl) {
                    best = Some((v, lam));
                }
            }
        }
        match best {
            Some((v, lam)) => (Some(v), lam, evals),
            None => (None, f64::INFINITY, evals),
        }
    }

    fn lambda(&self, values: &[f64]) -> f64 {
        let mut beta = self.base_beta.to_vec();
        let mut delta = self.base_delta.to_vec();
        for (c, &v) in self.controls.iter().zip(values) {
            if c.is_beta {
                beta[c.node] = v;
            } else {
                delta[c.node] = v;
            }
        }
        metzler_lambda_max_charpoly(&self.problem.metzler(&beta, &delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn pair(budget: f64) -> AllocationProblem {
        let g = Graph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        AllocationProblem::uniform(
            g,
            (0.2, 1.0),
            (0.5, 1.5),
            CostCurve::InverseLinear { scale: 1.0 },
            CostCurve::InverseLinear { scale: 1.0 },
            budget,
        )
    }

    #[test]
    fn no_budget_stays_at_zero_spend() {
        let r = brute_force_allocation(&pair(0.0), 10).unwrap();
        assert_eq!(r.beta, vec![1.0, 1.0]);
        assert_eq!(r.delta, vec![0.5, 0.5]);
        assert!((r.lambda_max - 0.5).abs() < 1e-12);
    }

    #[test]
    fn huge_budget_reaches_full_spend() {
        let r = brute_force_allocation(&pair(1e6), 10).unwrap();
        assert_eq!(r.beta, vec![0.2, 0.2]);
        assert_eq!(r.delta, vec![1.5, 1.5]);
        assert!((r.lambda_max - (0.2 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn spends_the_whole_budget_when_it_binds() {
        let p = pair(1.0);
        let r = brute_force_allocation(&p, 20).unwrap();
        assert!((r.spend - 1.0).abs() < 1e-9);
        assert!(r.lambda_max < 0.5);
    }

    #[test]
    fn refuses_big_instances() {
        let g = Graph::empty(5).unwrap();
        let p = AllocationProblem::uniform(
            g,
            (0.1, 1.0),
            (1.0, 1.0),
            CostCurve::Zero,
            CostCurve::Zero,
            1.0,
        );
        assert!(matches!(
            brute_force_allocation(&p, 10),
            Err(AllocationError::TooLarge { .. })
        ));
        assert!(matches!(
            brute_force_allocation(&pair(1.0), 51),
            Err(AllocationError::TooLarge { .. })
        ));
    }
}
