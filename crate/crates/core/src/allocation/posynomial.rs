//! Monomials and posynomials over positive variables.
//!
//! In log coordinates `y = ln x` a posynomial `q(x) = Σ_k c_k Π_i x_i^{a_ik}`
//! becomes `ln q = LSE_k(ln c_k + a_k·y)`, which is convex. The solver works
//! entirely with that form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AllocationError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    /// Dense exponent vector, one entry per variable.
    pub exponents: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posynomial {
    pub arity: usize,
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(arity: usize) -> Self {
        Self {
            arity,
            terms: Vec::new(),
        }
    }

    /// Single term `c Π x_i^{a_i}` with sparse exponents `(index, power)`.
    pub fn monomial(
        arity: usize,
        coefficient: f64,
        powers: &[(usize, f64)],
    ) -> Result<Self, AllocationError> {
        let mut p = Self::new(arity);
        p.push(coefficient, powers)?;
        Ok(p)
    }

    pub fn push(
        &mut self,
        coefficient: f64,
        powers: &[(usize, f64)],
    ) -> Result<(), AllocationError> {
        if !(coefficient > 0.0 && coefficient.is_finite()) {
            return Err(AllocationError::NotPosynomial(format!(
                "coefficient {coefficient} is not strictly positive"
            )));
        }
        let mut exponents = vec![0.0; self.arity];
        for &(i, a) in powers {
            assert!(i < self.arity, "variable index {i} out of range");
            exponents[i] += a;
        }
        self.terms.push(Monomial {
            coefficient,
            exponents,
        });
        Ok(())
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Multiplies every coefficient by `s > 0`.
    pub fn scale(&mut self, s: f64) {
        for t in &mut self.terms {
            t.coefficient *= s;
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coefficient
                    * t.exponents
                        .iter()
                        .zip(x)
                        .filter(|(a, _)| **a != 0.0)
                        .map(|(a, xi)| xi.powf(*a))
                        .product::<f64>()
            })
            .sum()
    }

    fn exponents_dot(t: &Monomial, y: &DVector<f64>) -> f64 {
        t.coefficient.ln()
            + t.exponents
                .iter()
                .zip(y.iter())
                .map(|(a, v)| a * v)
                .sum::<f64>()
    }

    /// `ln q(e^y)`, evaluated stably.
    pub fn log_eval(&self, y: &DVector<f64>) -> f64 {
        let z: Vec<f64> = self
            .terms
            .iter()
            .map(|t| Self::exponents_dot(t, y))
            .collect();
        let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    /// Value, gradient and Hessian of `ln q(e^y)`.
    pub fn log_derivatives(&self, y: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let k = self.arity;
        let z: Vec<f64> = self
            .terms
            .iter()
            .map(|t| Self::exponents_dot(t, y))
            .collect();
        let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let w: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = w.iter().sum();
        let value = m + total.ln();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for (t, &wt) in self.terms.iter().zip(&w) {
            let p = wt / total;
            let nz: Vec<(usize, f64)> = t
                .exponents
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(i, a)| (i, *a))
                .collect();
            for &(i, ai) in &nz {
                grad[i] += p * ai;
                for &(j, aj) in &nz {
                    hess[(i, j)] += p * ai * aj;
                }
            }
        }
        hess -= &grad * grad.transpose();
        (value, grad, hess)
    }
}
