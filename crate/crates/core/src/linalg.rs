//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Strongly connected components of the off-diagonal support of `m`
/// (an arc `i -> j` whenever `m[(i, j)] != 0`, `i != j`).
///
/// Components are returned in reverse topological order of the condensation
/// (Tarjan's order); each component lists its indices ascending.
pub fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && m[(i, j)] != 0.0).collect())
        .collect();
    tarjan(&succ)
}

/// Tarjan's algorithm over an adjacency list, iterative to avoid deep recursion.
pub fn tarjan(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSET: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNSET; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0usize;

    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        // (node, next successor position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < succ[v].len() {
                let w = succ[v][*pos];
                *pos += 1;
                if index[w] == UNSET {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Solves `a x = b` by LU with partial pivoting. `None` if `a` is singular.
pub fn solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.lu().solve(b)
}

/// `‖v‖∞`
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Largest real eigenvalue of a small Metzler matrix via its characteristic
/// polynomial.
///
/// The polynomial coefficients come from the Faddeev-LeVerrier recursion and
/// the rightmost real root is found by Newton's method started above the
/// maximum row sum. For a Metzler matrix every eigenvalue has real part at
/// most the Perron root, so the polynomial and all its derivatives are
/// positive to the right of it and Newton descends monotonically. Intended
/// for n up to about 6, where it is far cheaper than a full eigensolve.
pub fn metzler_lambda_max_charpoly(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix required");
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return m[(0, 0)];
    }
    let coeffs = characteristic_polynomial(m);
    let eval = |x: f64| -> (f64, f64) {
        // Horner for p and p'
        let mut p = 1.0;
        let mut dp = 0.0;
        for &c in &coeffs {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    };
    let upper = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let mut x = upper + scale;
    for _ in 0..500 {
        let (p, dp) = eval(x);
        if dp <= 0.0 || !p.is_finite() {
            break;
        }
        let step = p / dp;
        let next = x - step;
        if !(next < x) {
            break;
        }
        x = next;
        if step.abs() <= 1e-15 * scale {
            break;
        }
    }
    x
}

/// Coefficients `c_1..c_n` of `det(xI - M) = x^n + c_1 x^{n-1} + ... + c_n`.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let eye = DMatrix::<f64>::identity(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        mk = m * (&mk + &eye * c_prev);
        let c = -mk.trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}
