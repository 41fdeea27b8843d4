//! Dominant real eigenvalue of nonnegative and Metzler matrices.
//!
//! The matrix is shifted to `M + φI` with `φ = max(0, -min_i M_ii) + 1`, which
//! is entrywise nonnegative with a strictly positive diagonal, and power
//! iteration runs from the all-ones vector. The shift makes every irreducible
//! block primitive, so the iteration converges whenever the Perron root is
//! simple.
//!
//! Reducible inputs are split into strongly connected components first: the
//! dominant eigenvalue is the largest block eigenvalue. The matching vectors
//! are then recovered by inverse iteration just above that eigenvalue, which
//! also copes with the defective case (two chained blocks sharing the root)
//! where plain power iteration only converges like `1/k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{max_abs, strongly_connected_components};

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("empty matrix")]
    Empty,
    #[error("entry ({row}, {col}) = {value} is negative off the diagonal; matrix is not Metzler")]
    NotMetzler { row: usize, col: usize, value: f64 },
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("power iteration on {matrix} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        matrix: String,
        iterations: usize,
        residual: f64,
    },
}

#[derive(Clone, Debug)]
pub struct SpectralOptions {
    /// Stop once successive normalised iterates differ by at most this (∞-norm).
    pub vector_tol: f64,
    /// Required `‖Mv − λv‖∞`, scaled by `max(1, max|m_ij|)`.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Shown in error messages.
    pub label: Option<String>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            vector_tol: 1e-12,
            residual_tol: 1e-10,
            max_iterations: 100_000,
            label: None,
        }
    }
}

/// Perron eigenvalue with right and left eigenvectors, each normalised to sum 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda_max: f64,
    pub right_vector: Vec<f64>,
    pub left_vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn lambda_max(m: &DMatrix<f64>) -> Result<SpectralResult, SpectralError> {
    lambda_max_with(m, &SpectralOptions::default())
}

pub fn lambda_max_with(
    m: &DMatrix<f64>,
    opts: &SpectralOptions,
) -> Result<SpectralResult, SpectralError> {
    validate(m)?;
    let n = m.nrows();
    let min_diag = (0..n).map(|i| m[(i, i)]).fold(f64::INFINITY, f64::min);
    let phi = (-min_diag).max(0.0) + 1.0;
    let shifted = m + DMatrix::identity(n, n) * phi;
    let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let tol = opts.residual_tol * scale;
    let name = || {
        opts.label
            .clone()
            .unwrap_or_else(|| format!("{n}x{n} matrix"))
    };

    let comps = strongly_connected_components(m);
    let (lambda, right, left, iterations) = if comps.len() == 1 {
        let r = power_iteration(&shifted, opts, tol).map_err(|(it, res)| {
            SpectralError::NoConvergence {
                matrix: name(),
                iterations: it,
                residual: res,
            }
        })?;
        let l = power_iteration(&shifted.transpose(), opts, tol).map_err(|(it, res)| {
            SpectralError::NoConvergence {
                matrix: format!("transpose of {}", name()),
                iterations: it,
                residual: res,
            }
        })?;
        (r.0 - phi, r.1, l.1, r.2 + l.2)
    } else {
        let mut best = f64::NEG_INFINITY;
        let mut iterations = 0;
        for comp in &comps {
            let value = if comp.len() == 1 {
                m[(comp[0], comp[0])]
            } else {
                let block =
                    DMatrix::from_fn(comp.len(), comp.len(), |a, b| shifted[(comp[a], comp[b])]);
                let (lam, _, it) = power_iteration(&block, opts, tol).map_err(|(it, res)| {
                    SpectralError::NoConvergence {
                        matrix: format!("{} (block of size {})", name(), comp.len()),
                        iterations: it,
                        residual: res,
                    }
                })?;
                iterations += it;
                lam - phi
            };
            best = best.max(value);
        }
        let (right, it_r) = eigenvector(m, best, scale, tol);
        let (left, it_l) = eigenvector(&m.transpose(), best, scale, tol);
        (best, right, left, iterations + it_r + it_l)
    };

    let residual = residual(m, &right, lambda).max(residual(&m.transpose(), &left, lambda));
    if !(residual <= tol) {
        return Err(SpectralError::NoConvergence {
            matrix: name(),
            iterations,
            residual,
        });
    }
    Ok(SpectralResult {
        lambda_max: lambda,
        right_vector: right,
        left_vector: left,
        iterations,
        residual,
    })
}

fn validate(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    if m.nrows() != m.ncols() {
        return Err(SpectralError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(SpectralError::Empty);
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(SpectralError::NonFinite { row: i, col: j });
            }
            if i != j && v < 0.0 {
                return Err(SpectralError::NotMetzler {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Power iteration on a nonnegative matrix with positive diagonal.
/// Returns (eigenvalue, vector summing to 1, iterations) or (iterations, residual) on failure.
fn power_iteration(
    s: &DMatrix<f64>,
    opts: &SpectralOptions,
    tol: f64,
) -> Result<(f64, Vec<f64>, usize), (usize, f64)> {
    let n = s.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut last_residual = f64::INFINITY;
    for k in 1..=opts.max_iterations {
        let mut w = s * &v;
        let lam = w.sum();
        w /= lam;
        let change = (&w - &v).amax();
        v = w;
        if change <= opts.vector_tol {
            let sv = s * &v;
            let lam = sv.sum();
            let res = (sv - &v * lam).amax();
            last_residual = res;
            if res <= tol {
                return Ok((lam, v.iter().copied().collect(), k));
            }
        }
    }
    Err((opts.max_iterations, last_residual))
}

/// Eigenvector for `lambda` by inverse iteration with shift `lambda + ε`.
/// Exact cancellation in 0/1 matrices can leave a zero pivot at a given
/// shift, under partial or under full pivoting (never both, in practice);
/// both factorisations are tried, then the shift is nudged by an irrational
/// factor.
fn inverse_iteration(m: &DMatrix<f64>, lambda: f64, scale: f64, tol: f64) -> (Vec<f64>, usize) {
    let n = m.nrows();
    let base = 1e-10 * scale.max(lambda.abs());
    let start = DVector::from_element(n, 1.0 / n as f64);
    let mut iterations = 0;
    for eps in [
        base,
        base * std::f64::consts::FRAC_1_SQRT_2,
        base * std::f64::consts::SQRT_2,
    ] {
        let a = DMatrix::identity(n, n) * (lambda + eps) - m;
        let partial = a.clone().lu();
        let full = a.full_piv_lu();
        for use_full in [false, true] {
            let solve = |b: &DVector<f64>| {
                if use_full {
                    full.solve(b)
                } else {
                    partial.solve(b)
                }
            };
            let mut v = start.clone();
            let mut ok = false;
            for _ in 0..200 {
                iterations += 1;
                let Some(mut x) = solve(&v) else {
                    break;
                };
                let s = x.sum();
                if s == 0.0 || !s.is_finite() {
                    break;
                }
                x /= s;
                x.iter_mut().for_each(|e| {
                    if *e < 0.0 && *e > -1e-14 {
                        *e = 0.0
                    }
                });
                v = x;
                ok = true;
                if residual(m, v.as_slice(), lambda) <= 0.01 * tol {
                    break;
                }
            }
            if ok {
                return (v.iter().copied().collect(), iterations);
            }
        }
    }
    (start.iter().copied().collect(), iterations)
}

/// Inverse iteration, falling back to the null vector of `M − λI` from an
/// SVD when a long Jordan chain keeps inverse iteration at `O(ε/k)`.
fn eigenvector(m: &DMatrix<f64>, lambda: f64, scale: f64, tol: f64) -> (Vec<f64>, usize) {
    let (v, iterations) = inverse_iteration(m, lambda, scale, tol);
    if residual(m, &v, lambda) <= tol {
        return (v, iterations);
    }
    let n = m.nrows();
    let svd = (m - DMatrix::identity(n, n) * lambda).svd(false, true);
    let Some(v_t) = svd.v_t else {
        return (v, iterations);
    };
    let k = svd.singular_values.imin();
    let mut x: Vec<f64> = v_t.row(k).iter().copied().collect();
    let pivot = x
        .iter()
        .copied()
        .fold(0.0f64, |a, e| if e.abs() > a.abs() { e } else { a });
    let s: f64 = x.iter().sum();
    // orient by the sum when it is meaningful, else by the largest entry
    let d = if s.abs() > 1e-8 * pivot.abs() {
        s
    } else {
        pivot
    };
    x.iter_mut().for_each(|e| {
        *e /= d;
        if *e < 0.0 && *e > -1e-14 {
            *e = 0.0
        }
    });
    if residual(m, &x, lambda) < residual(m, &v, lambda) {
        (x, iterations + 1)
    } else {
        (v, iterations)
    }
}

fn residual(m: &DMatrix<f64>, v: &[f64], lambda: f64) -> f64 {
    let v = DVector::from_column_slice(v);
    let r = m * &v - v * lambda;
    max_abs(r.as_slice())
}

impl super::Graph {
    /// Perron eigenvalue of the weighted adjacency matrix.
    pub fn spectral(&self) -> Result<SpectralResult, SpectralError> {
        lambda_max(&self.adjacency())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, GraphKind};

    fn dense_reference(m: &DMatrix<f64>) -> f64 {
        m.clone()
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn complete_graph_k4() {
        let r = Graph::generate(&GraphKind::Complete, 4)
            .unwrap()
            .spectral()
            .unwrap();
        assert!((r.lambda_max - 3.0).abs() < 1e-10);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn star_five() {
        let r = Graph::generate(&GraphKind::Star, 5)
            .unwrap()
            .spectral()
            .unwrap();
        assert!((r.lambda_max - 2.0).abs() < 1e-10, "{}", r.lambda_max);
    }

    #[test]
    fn strongly_connected_weighted_six_node_matches_dense_eigensolver() {
        // directed ring plus chords, asymmetric weights
        let mut m = DMatrix::zeros(6, 6);
        let arcs = [
            (0, 1, 0.7),
            (1, 2, 1.3),
            (2, 3, 0.4),
            (3, 4, 2.1),
            (4, 5, 0.9),
            (5, 0, 1.1),
            (0, 3, 0.25),
            (2, 5, 1.7),
            (4, 1, 0.6),
            (3, 0, 0.8),
        ];
        for (i, j, w) in arcs {
            m[(i, j)] = w;
        }
        let r = lambda_max(&m).unwrap();
        let reference = dense_reference(&m);
        assert!(
            (r.lambda_max - reference).abs() < 1e-8,
            "{} vs {reference}",
            r.lambda_max
        );
        assert!(r.right_vector.iter().all(|&x| x > 0.0));
        assert!(r.left_vector.iter().all(|&x| x > 0.0));
        assert!((r.right_vector.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metzler_matrix_shifts_back() {
        let m = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 0.5, -1.0, 0.3, 0.2, 0.4, -3.0]);
        let r = lambda_max(&m).unwrap();
        assert!((r.lambda_max - dense_reference(&m)).abs() < 1e-9);
        assert!(r.lambda_max < 0.0);
    }

    #[test]
    fn single_directed_edge_is_nilpotent() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 1.0;
        let r = lambda_max(&m).unwrap();
        assert!(r.lambda_max.abs() < 1e-9);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn chained_equal_blocks_are_handled() {
        // two 2-cycles joined by one arc: eigenvalue 1 is defective
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        m[(2, 3)] = 1.0;
        m[(3, 2)] = 1.0;
        m[(1, 2)] = 1.0;
        let r = lambda_max(&m).unwrap();
        assert!((r.lambda_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix() {
        let r = lambda_max(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(r.lambda_max, 0.0);
    }

    #[test]
    fn rejects_non_metzler() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(
            lambda_max(&m),
            Err(SpectralError::NotMetzler { .. })
        ));
        let r = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            lambda_max(&r),
            Err(SpectralError::NotSquare { .. })
        ));
    }

    #[test]
    fn non_convergence_names_matrix() {
        let g = Graph::generate(&GraphKind::Path, 40).unwrap();
        let opts = SpectralOptions {
            max_iterations: 3,
            label: Some("path-40".into()),
            ..Default::default()
        };
        match lambda_max_with(&g.adjacency(), &opts) {
            Err(SpectralError::NoConvergence { matrix, .. }) => assert_eq!(matrix, "path-40"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetric_graph_left_equals_right() {
        let g = Graph::generate(&GraphKind::Grid { rows: 3, cols: 4 }, 12).unwrap();
        let r = g.spectral().unwrap();
        for (a, b) in r.left_vector.iter().zip(&r.right_vector) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn chained_periodic_blocks_with_a_shared_root() {
        // two 2-cycles, one feeding the other: λ = 1 is defective, and the
        // shifted LU hits an exact zero pivot under partial pivoting
        let m = DMatrix::from_row_slice(
            5,
            5,
            &[
                0., 0., 0., 0., 1., //
                1., 0., 1., 1., 1., //
                0., 0., 0., 0., 1., //
                1., 1., 1., 0., 1., //
                0., 0., 1., 0., 0.,
            ],
        );
        let r = lambda_max(&m).unwrap();
        assert!((r.lambda_max - 1.0).abs() < 1e-12);
        assert!(r.residual <= 1e-10);
        assert!((r.right_vector[1] - 0.5).abs() < 1e-8 && (r.left_vector[4] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn nilpotent_chain_with_isolated_nodes() {
        // a DAG left behind by node removal; full pivoting alone loses the last pivot
        let mut m = DMatrix::zeros(7, 7);
        for (i, j) in [(2, 0), (2, 5), (3, 0), (5, 3)] {
            m[(i, j)] = 1.0;
        }
        let r = lambda_max(&m).unwrap();
        assert_eq!(r.lambda_max, 0.0);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn long_jordan_chain_falls_back_to_the_null_vector() {
        // 2-cycle {3,4} feeding 2-cycle {1,2}, plus isolated nodes
        let mut m = DMatrix::zeros(7, 7);
        for (i, j) in [
            (0, 6),
            (1, 0),
            (1, 2),
            (1, 3),
            (1, 4),
            (1, 6),
            (2, 0),
            (2, 1),
            (2, 3),
            (2, 4),
            (3, 4),
            (4, 0),
            (4, 3),
        ] {
            m[(i, j)] = 1.0;
        }
        let r = lambda_max(&m).unwrap();
        assert!((r.lambda_max - 1.0).abs() < 1e-12);
        assert!(r.residual <= 1e-10);
        assert!(r
            .right_vector
            .iter()
            .chain(&r.left_vector)
            .all(|&x| x >= -1e-12));
    }
}
