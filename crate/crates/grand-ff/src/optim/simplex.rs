//! Dense primal simplex for tiny equality-form LPs.
//!
//! Solves `min c'x  s.t.  Ax = b, x >= 0` starting from a caller-supplied
//! basic feasible basis, with Bland's rule for both the entering and the
//! leaving variable so the method cannot cycle. The basis system is
//! re-factorized every pivot; instances here have a handful of rows, so
//! clarity wins over update tricks.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Zero threshold for reduced costs, pivots, and feasibility checks.
const PIVOT_TOL: f64 = 1e-9;
/// Pivot cap; Bland's rule terminates long before this on sane inputs.
const MAX_PIVOTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("basis matrix is singular")]
    SingularBasis,
    #[error("LP is unbounded below")]
    Unbounded,
    #[error("starting basis is infeasible (component {component} = {value})")]
    InfeasibleStart { component: usize, value: f64 },
    #[error("numerical degeneracy: no progress after {MAX_PIVOTS} pivots")]
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub basis: Vec<usize>,
    /// False when some nonbasic column prices out to a zero reduced cost,
    /// i.e. alternative optima (or a degenerate tie) exist.
    pub is_unique: bool,
}

/// Primal simplex from an explicit starting basis.
pub fn solve_with_basis(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    mut basis: Vec<usize>,
) -> Result<LpSolution, SimplexError> {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(basis.len(), m, "basis must have one column per row");

    for _ in 0..MAX_PIVOTS {
        let b_mat = DMatrix::from_fn(m, m, |r, kcol| a[(r, basis[kcol])]);
        let b_t = b_mat.transpose();
        let lu = b_mat.lu();
        let x_b = lu.solve(b).ok_or(SimplexError::SingularBasis)?;
        if let Some(neg) = x_b.iter().position(|&v| v < -PIVOT_TOL) {
            return Err(SimplexError::InfeasibleStart {
                component: basis[neg],
                value: x_b[neg],
            });
        }
        let c_b = DVector::from_fn(m, |r, _| c[basis[r]]);
        let y = b_t.lu().solve(&c_b).ok_or(SimplexError::SingularBasis)?;

        // Bland: enter the lowest-index column with a negative reduced cost.
        let mut entering = None;
        let mut ties = false;
        for j in 0..n {
            if basis.contains(&j) {
                continue;
            }
            let reduced = c[j] - y.dot(&a.column(j).into_owned());
            if reduced < -PIVOT_TOL && entering.is_none() {
                entering = Some(j);
            } else if reduced.abs() <= PIVOT_TOL {
                ties = true;
            }
        }
        let Some(enter) = entering else {
            let mut x = vec![0.0; n];
            for (r, &col) in basis.iter().enumerate() {
                x[col] = x_b[r].max(0.0);
            }
            let value = x.iter().zip(c.iter()).map(|(xi, ci)| xi * ci).sum();
            return Ok(LpSolution {
                value,
                x,
                basis,
                is_unique: !ties,
            });
        };

        let w = lu
            .solve(&a.column(enter).into_owned())
            .ok_or(SimplexError::SingularBasis)?;
        // Bland again: among minimum-ratio rows, leave the lowest variable index.
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if w[r] <= PIVOT_TOL {
                continue;
            }
            let ratio = x_b[r] / w[r];
            match leave {
                None => leave = Some((r, ratio)),
                Some((best_r, best)) => {
                    if ratio < best - PIVOT_TOL
                        || (ratio <= best + PIVOT_TOL && basis[r] < basis[best_r])
                    {
                        leave = Some((r, ratio.min(best)));
                    }
                }
            }
        }
        let Some((leave_row, _)) = leave else {
            return Err(SimplexError::Unbounded);
        };
        basis[leave_row] = enter;
    }
    Err(SimplexError::Degenerate)
}

/// Enumerate basic feasible solutions of `Ax = b, x >= 0` by brute force,
/// returning the optimal value and every optimal vertex. Exponential in the
/// column count; intended as an independent certificate for small instances.
pub fn enumerate_vertices(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Option<VertexOptimum> {
    let m = a.nrows();
    let n = a.ncols();
    let mut best: Option<f64> = None;
    let mut optimal: Vec<Vec<f64>> = Vec::new();
    let mut seen = 0usize;
    let mut subset: Vec<usize> = (0..m).collect();
    if n < m {
        return None;
    }
    loop {
        let b_mat = DMatrix::from_fn(m, m, |r, kcol| a[(r, subset[kcol])]);
        let lu = b_mat.lu();
        if lu.determinant().abs() > PIVOT_TOL {
            if let Some(x_b) = lu.solve(b) {
                if x_b.iter().all(|&v| v >= -PIVOT_TOL) {
                    seen += 1;
                    let mut x = vec![0.0; n];
                    for (r, &col) in subset.iter().enumerate() {
                        x[col] = x_b[r].max(0.0);
                    }
                    let value: f64 = x.iter().zip(c.iter()).map(|(xi, ci)| xi * ci).sum();
                    match best {
                        None => {
                            best = Some(value);
                            optimal.push(x);
                        }
                        Some(v) if value < v - 1e-9 => {
                            best = Some(value);
                            optimal.clear();
                            optimal.push(x);
                        }
                        Some(v) if (value - v).abs() <= 1e-9 => {
                            if !optimal.iter().any(|o| close(o, &x)) {
                                optimal.push(x);
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        if !next_subset(&mut subset, n) {
            break;
        }
    }
    best.map(|value| VertexOptimum {
        value,
        vertices: optimal,
        feasible_bases: seen,
    })
}

#[derive(Debug, Clone)]
pub struct VertexOptimum {
    pub value: f64,
    pub vertices: Vec<Vec<f64>>,
    pub feasible_bases: usize,
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-8)
}

fn next_subset(subset: &mut [usize], n: usize) -> bool {
    let m = subset.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if subset[i] < n - (m - i) {
            subset[i] += 1;
            for j in (i + 1)..m {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_two_column_packing_lp() {
        // min x1 + x2  s.t.  x1 + 2 x2 = 1, x >= 0.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DVector::from_row_slice(&[1.0]);
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let sol = solve_with_basis(&a, &b, &c, vec![0]).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!((sol.x[1] - 0.5).abs() < 1e-12);
        assert!(sol.is_unique);
    }

    #[test]
    fn vertex_enumeration_agrees() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_row_slice(&[0.5, 0.5]);
        let c = DVector::from_row_slice(&[1.0, 1.0, 1.0]);
        let sol = solve_with_basis(&a, &b, &c, vec![0, 2]).unwrap();
        let oracle = enumerate_vertices(&a, &b, &c).unwrap();
        assert!((sol.value - oracle.value).abs() < 1e-12);
        assert!((sol.value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn detects_alternative_optima() {
        // min x1 + x2 s.t. x1 + x2 = 1: every convex combination optimal.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_row_slice(&[1.0]);
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let sol = solve_with_basis(&a, &b, &c, vec![0]).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!(!sol.is_unique);
    }

    #[test]
    fn subset_iterator_covers_all_pairs() {
        let mut s = vec![0, 1];
        let mut count = 1;
        while next_subset(&mut s, 4) {
            count += 1;
        }
        assert_eq!(count, 6);
    }
}
