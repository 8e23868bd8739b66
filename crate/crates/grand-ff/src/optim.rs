//! Fluid-scale optimization.
//!
//! Two deterministic problems over the load polytope
//! `X = { x >= 0 : sum_k k_i x_k = rho_i }`:
//!
//! - the LP `min sum_k x_k` whose value `q*` is the least possible
//!   occupied-server mass (solved by dense simplex, certified by vertex
//!   enumeration on small instances);
//! - the strictly convex surrogate `min L^(a)` whose unique minimizer
//!   `x^{*,a}` is the equilibrium the greedy-random policy with parameter
//!   `a` concentrates on, with `q^{*,a} -> q*` as `a` shrinks.
//!
//! The convex solver works on the dual: stationarity gives the product form
//! `x_k = (a / c_k) exp(sum_i k_i eta_i)`, and the multipliers solve
//! `F_i(eta) = sum_k k_i x_k(eta) - rho_i = 0`, a smooth system with a
//! positive-definite Jacobian, handled by damped Newton. The product form is
//! standard stationarity algebra rather than something quoted, so every
//! solve is re-checked by an independent projected-gradient descent on
//! `L^(a)` itself; a value mismatch is an error, not a warning.

pub mod simplex;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::ConfigurationSet;
use simplex::{enumerate_vertices, solve_with_basis, SimplexError, VertexOptimum};

/// Feasibility tolerance: `|sum_k k_i x_k - rho_i|` at reported solutions.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Product-form (KKT stationarity) residual tolerance.
pub const KKT_TOL: f64 = 1e-8;
/// Allowed objective-value gap between the Newton solution and the
/// projected-gradient oracle.
pub const VALUE_CROSS_CHECK_TOL: f64 = 1e-6;
/// Column-count cap for the brute-force vertex enumeration certificate.
pub const ENUMERATION_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter a must lie in (0,1), got {0}")]
    DomainA(f64),
    #[error("Newton iteration did not converge: residual {residual}")]
    NonConvergence { residual: f64 },
    #[error(
        "projected-gradient oracle disagrees with the product-form solution: value gap {gap}"
    )]
    OracleMismatch { gap: f64 },
    #[error("negative component x[{index}] = {value}")]
    NegativeComponent { index: usize, value: f64 },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("instance too large for vertex enumeration: {0} columns (cap {ENUMERATION_CAP})")]
    TooLargeForEnumeration(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A point in the fluid-scaled occupancy space, indexed like the nonzero
/// configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidVector {
    pub x: Vec<f64>,
}

impl FluidVector {
    pub fn new(x: Vec<f64>) -> Self {
        FluidVector { x }
    }

    /// Per-type customer mass `y_i = sum_k k_i x_k`.
    pub fn y(&self, configs: &ConfigurationSet) -> Vec<f64> {
        let mut y = vec![0.0; configs.dim()];
        for (k, &xk) in self.x.iter().enumerate() {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += configs.config(k).0[i] as f64 * xk;
            }
        }
        y
    }

    /// Occupied-server mass `q = sum_k x_k`.
    pub fn q(&self) -> f64 {
        self.x.iter().sum()
    }

    /// Total customer mass `z = sum_i y_i`.
    pub fn z(&self, configs: &ConfigurationSet) -> f64 {
        self.y(configs).iter().sum()
    }

    /// Worst constraint violation `max_i |y_i - rho_i|`.
    pub fn load_residual(&self, configs: &ConfigurationSet, rho: &[f64]) -> f64 {
        self.y(configs)
            .iter()
            .zip(rho)
            .map(|(y, r)| (y - r).abs())
            .fold(0.0, f64::max)
    }

    /// Membership in the load polytope at the standard tolerance.
    pub fn in_polytope(&self, configs: &ConfigurationSet, rho: &[f64]) -> bool {
        self.x.iter().all(|&v| v >= -CONSTRAINT_TOL)
            && self.load_residual(configs, rho) <= CONSTRAINT_TOL
    }
}

/// `c_k = prod_i k_i!` with `0! = 1`.
pub fn c_factor(config: &crate::model::Configuration) -> f64 {
    config
        .0
        .iter()
        .map(|&k| (1..=k as u64).map(|v| v as f64).product::<f64>().max(1.0))
        .product()
}

/// The convex surrogate `L^(a)(x) = [-log a]^{-1} sum_k x_k log(x_k c_k / (e a))`
/// with the continuity convention `0 log 0 = 0`.
pub fn eval_l(x: &[f64], configs: &ConfigurationSet, a: f64) -> Result<f64, OptimError> {
    check_a(a)?;
    if let Some(idx) = x.iter().position(|&v| v < 0.0) {
        return Err(OptimError::NegativeComponent {
            index: idx,
            value: x[idx],
        });
    }
    let scale = 1.0 / -a.ln();
    let ea = std::f64::consts::E * a;
    let mut sum = 0.0;
    for (k, &xk) in x.iter().enumerate() {
        if xk > 0.0 {
            sum += xk * (xk * c_factor(configs.config(k)) / ea).ln();
        }
    }
    Ok(scale * sum)
}

fn check_a(a: f64) -> Result<(), OptimError> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(OptimError::DomainA(a))
    }
}

/// Constraint matrix `A[i][k] = k_i` of the load polytope.
pub fn load_matrix(configs: &ConfigurationSet) -> DMatrix<f64> {
    DMatrix::from_fn(configs.dim(), configs.len(), |i, k| {
        configs.config(k).0[i] as f64
    })
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub q_star: f64,
    pub x_star: FluidVector,
    pub is_unique: bool,
}

/// Minimize the occupied-server mass over the load polytope.
///
/// The unit-vector configurations always form a feasible starting basis
/// (`x_{e_i} = rho_i`), so no phase-one is needed.
pub fn solve_qstar(configs: &ConfigurationSet, rho: &[f64]) -> Result<LpOutcome, OptimError> {
    check_rho(configs, rho)?;
    let a = load_matrix(configs);
    let b = DVector::from_row_slice(rho);
    let c = DVector::from_element(configs.len(), 1.0);
    let basis: Vec<usize> = (0..configs.dim()).map(|i| configs.unit_index(i)).collect();
    let sol = solve_with_basis(&a, &b, &c, basis)?;
    Ok(LpOutcome {
        q_star: sol.value,
        x_star: FluidVector::new(sol.x),
        is_unique: sol.is_unique,
    })
}

/// Brute-force certificate: optimal value and all optimal vertices of the LP.
pub fn qstar_by_enumeration(
    configs: &ConfigurationSet,
    rho: &[f64],
) -> Result<VertexOptimum, OptimError> {
    check_rho(configs, rho)?;
    if configs.len() > ENUMERATION_CAP {
        return Err(OptimError::TooLargeForEnumeration(configs.len()));
    }
    let a = load_matrix(configs);
    let b = DVector::from_row_slice(rho);
    let c = DVector::from_element(configs.len(), 1.0);
    enumerate_vertices(&a, &b, &c).ok_or(OptimError::NonConvergence { residual: f64::NAN })
}

fn check_rho(configs: &ConfigurationSet, rho: &[f64]) -> Result<(), OptimError> {
    if rho.len() != configs.dim() {
        return Err(OptimError::Dimension {
            expected: configs.dim(),
            got: rho.len(),
        });
    }
    Ok(())
}

/// Solution of `min L^(a)` over the load polytope.
#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub x_star_a: FluidVector,
    pub q_star_a: f64,
    /// Dual multipliers of the load constraints.
    pub eta: Vec<f64>,
    pub constraint_residual: f64,
    /// Worst deviation of `log(x_k c_k / a)` from `sum_i k_i eta_i`.
    pub kkt_residual: f64,
    /// `L(x_pg) - L(x^{*,a})` for the independent projected-gradient run.
    pub pg_value_gap: f64,
}

/// Damped-Newton solve of the dual system, followed by the mandatory
/// projected-gradient confirmation of the recovered primal point.
pub fn solve_xstar_a(
    configs: &ConfigurationSet,
    rho: &[f64],
    a: f64,
) -> Result<ConvexSolution, OptimError> {
    check_a(a)?;
    check_rho(configs, rho)?;
    let dim = configs.dim();
    let n = configs.len();
    let c_factors: Vec<f64> = (0..n).map(|k| c_factor(configs.config(k))).collect();

    let primal = |eta: &DVector<f64>| -> Vec<f64> {
        (0..n)
            .map(|k| {
                let dot: f64 = configs.config(k)
                    .0
                    .iter()
                    .enumerate()
                    .map(|(i, &ki)| ki as f64 * eta[i])
                    .sum();
                a / c_factors[k] * dot.exp()
            })
            .collect()
    };
    let residual = |x: &[f64]| -> DVector<f64> {
        let mut f = DVector::from_element(dim, 0.0);
        for (k, &xk) in x.iter().enumerate() {
            for i in 0..dim {
                f[i] += configs.config(k).0[i] as f64 * xk;
            }
        }
        for i in 0..dim {
            f[i] -= rho[i];
        }
        f
    };

    let mut eta = DVector::from_element(dim, 0.0);
    let mut x = primal(&eta);
    let mut f = residual(&x);
    let mut norm = f.amax();
    let mut converged = norm <= 1e-13;
    for _ in 0..200 {
        if converged {
            break;
        }
        // Jacobian J_ij = sum_k k_i k_j x_k, positive definite because the
        // unit vectors are always columns.
        let mut jac = DMatrix::from_element(dim, dim, 0.0);
        for (k, &xk) in x.iter().enumerate() {
            let counts = &configs.config(k).0;
            for i in 0..dim {
                for j in 0..dim {
                    jac[(i, j)] += counts[i] as f64 * counts[j] as f64 * xk;
                }
            }
        }
        let delta = jac
            .lu()
            .solve(&(-&f))
            .ok_or(OptimError::NonConvergence { residual: norm })?;
        // Halve the step until the residual norm actually decreases.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &eta + t * &delta;
            let xt = primal(&trial);
            let ft = residual(&xt);
            if ft.amax() < norm {
                eta = trial;
                x = xt;
                f = ft;
                norm = f.amax();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        converged = norm <= 1e-13;
    }
    if norm > CONSTRAINT_TOL {
        return Err(OptimError::NonConvergence { residual: norm });
    }

    let kkt_residual = x
        .iter()
        .enumerate()
        .map(|(k, &xk)| {
            let dot: f64 = configs.config(k)
                .0
                .iter()
                .enumerate()
                .map(|(i, &ki)| ki as f64 * eta[i])
                .sum();
            ((xk * c_factors[k] / a).ln() - dot).abs()
        })
        .fold(0.0, f64::max);

    let l_newton = eval_l(&x, configs, a)?;
    let x_pg = projected_gradient(configs, rho, a)?;
    let l_pg = eval_l(&x_pg, configs, a)?;
    let pg_value_gap = l_pg - l_newton;
    if pg_value_gap < -1e-9 || pg_value_gap > VALUE_CROSS_CHECK_TOL {
        return Err(OptimError::OracleMismatch { gap: pg_value_gap });
    }

    Ok(ConvexSolution {
        q_star_a: x.iter().sum(),
        x_star_a: FluidVector::new(x),
        eta: eta.iter().copied().collect(),
        constraint_residual: norm,
        kkt_residual,
        pg_value_gap,
    })
}

/// Independent minimization of `L^(a)` by projected gradient descent with
/// backtracking, starting from the unit-configuration vertex. Deliberately
/// ignorant of the product form.
fn projected_gradient(
    configs: &ConfigurationSet,
    rho: &[f64],
    a: f64,
) -> Result<Vec<f64>, OptimError> {
    let n = configs.len();
    let projector = PolytopeProjector::new(configs, rho, None);
    let mut x = vec![0.0; n];
    for i in 0..configs.dim() {
        x[configs.unit_index(i)] += rho[i];
    }
    let scale = 1.0 / -a.ln();
    let grad = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &xk)| scale * (xk.max(1e-300) * c_factor(configs.config(k)) / a).ln())
            .collect()
    };
    let mut l_cur = eval_l(&x, configs, a)?;
    let mut step = 0.25;
    let mut stalls = 0;
    for _ in 0..20_000 {
        let g = grad(&x);
        let mut accepted = false;
        let mut t = step;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
            let projected = projector.project(&trial);
            let l_trial = eval_l(&projected, configs, a)?;
            if l_trial < l_cur {
                let moved: f64 = projected
                    .iter()
                    .zip(&x)
                    .map(|(p, q)| (p - q).powi(2))
                    .sum::<f64>()
                    .sqrt();
                x = projected;
                if l_cur - l_trial < 1e-15 * (1.0 + l_cur.abs()) && moved < 1e-12 {
                    stalls += 1;
                } else {
                    stalls = 0;
                }
                l_cur = l_trial;
                accepted = true;
                step = (t * 2.0).min(4.0);
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            stalls += 1;
        }
        if stalls >= 3 {
            break;
        }
    }
    Ok(x)
}

/// Euclidean projection onto `{ x >= 0 : Ax = rho (and optionally 1'x = q) }`
/// by Dykstra's alternating projections between the affine set and the
/// nonnegative orthant.
pub struct PolytopeProjector {
    a: DMatrix<f64>,
    b: DVector<f64>,
    pinv: DMatrix<f64>,
}

impl PolytopeProjector {
    pub fn new(configs: &ConfigurationSet, rho: &[f64], face_value: Option<f64>) -> Self {
        let base = load_matrix(configs);
        let (a, b) = match face_value {
            None => (base, DVector::from_row_slice(rho)),
            Some(q) => {
                let mut rows = base.insert_row(configs.dim(), 1.0);
                // insert_row fills with the given value; overwrite cleanly.
                for k in 0..configs.len() {
                    rows[(configs.dim(), k)] = 1.0;
                }
                let mut b = DVector::from_element(configs.dim() + 1, 0.0);
                for (i, &r) in rho.iter().enumerate() {
                    b[i] = r;
                }
                b[configs.dim()] = q;
                (rows, b)
            }
        };
        let pinv = a
            .clone()
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a finite matrix");
        PolytopeProjector { a, b, pinv }
    }

    fn project_affine(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.pinv * (&self.a * v - &self.b)
    }

    pub fn project(&self, point: &[f64]) -> Vec<f64> {
        let mut x = DVector::from_row_slice(point);
        let mut p = DVector::from_element(x.len(), 0.0);
        let mut q = DVector::from_element(x.len(), 0.0);
        for _ in 0..5_000 {
            let y = self.project_affine(&(&x + &p));
            p = &x + &p - &y;
            let mut next = &y + &q;
            let mut moved: f64 = 0.0;
            for v in next.iter_mut() {
                if *v < 0.0 {
                    moved += *v * *v;
                    *v = 0.0;
                }
            }
            q = &y + &q - &next;
            let delta = (&next - &x).amax();
            x = next;
            if delta < 1e-13 && moved < 1e-26 {
                break;
            }
        }
        x.iter().copied().collect()
    }
}

/// Euclidean distance from `point` to the optimal face of the LP.
pub fn distance_to_lp_face(
    configs: &ConfigurationSet,
    rho: &[f64],
    q_star: f64,
    point: &[f64],
) -> f64 {
    let projector = PolytopeProjector::new(configs, rho, Some(q_star));
    let proj = projector.project(point);
    point
        .iter()
        .zip(&proj)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ASweepRow {
    pub a: f64,
    pub q_star_a: f64,
    /// Distance from `x^{*,a}` to the LP-optimal face.
    pub distance_to_face: f64,
}

/// Diagnostic table for `a -> 0`: `q^{*,a}` decreasing toward `q*` and
/// `x^{*,a}` approaching the optimal face.
pub fn a_sweep(
    configs: &ConfigurationSet,
    rho: &[f64],
    grid: &[f64],
) -> Result<Vec<ASweepRow>, OptimError> {
    let lp = solve_qstar(configs, rho)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &a in grid {
        let sol = solve_xstar_a(configs, rho, a)?;
        rows.push(ASweepRow {
            a,
            q_star_a: sol.q_star_a,
            distance_to_face: distance_to_lp_face(configs, rho, lp.q_star, &sol.x_star_a.x),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Configuration;

    fn set(gens: &[&[u32]]) -> ConfigurationSet {
        let gens: Vec<Configuration> = gens.iter().map(|g| Configuration(g.to_vec())).collect();
        ConfigurationSet::from_generators(&gens).unwrap()
    }

    fn capacity_two() -> ConfigurationSet {
        set(&[&[2]])
    }

    #[test]
    fn c_factor_examples() {
        assert_eq!(c_factor(&Configuration(vec![1])), 1.0);
        assert_eq!(c_factor(&Configuration(vec![2])), 2.0);
        assert_eq!(c_factor(&Configuration(vec![2, 1])), 2.0);
        assert_eq!(c_factor(&Configuration(vec![3, 2])), 12.0);
    }

    #[test]
    fn eval_l_at_vertex() {
        // All mass on single-occupancy servers: (1/ln 10) * ln(1/(0.1 e)).
        let configs = capacity_two();
        let l = eval_l(&[1.0, 0.0], &configs, 0.1).unwrap();
        let expect = (1.0 / 10.0f64.ln()) * (1.0 / (0.1 * std::f64::consts::E)).ln();
        assert!((l - expect).abs() < 1e-12);
        assert!((l - 0.565_705_5).abs() < 1e-6, "l = {l}");
    }

    #[test]
    fn eval_l_zero_vector_is_zero() {
        let configs = capacity_two();
        assert_eq!(eval_l(&[0.0, 0.0], &configs, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn eval_l_at_the_minimizer_is_below_the_vertex() {
        let configs = capacity_two();
        let l_min = eval_l(&[0.270_156_2, 0.364_921_9], &configs, 0.1).unwrap();
        let l_vertex = eval_l(&[1.0, 0.0], &configs, 0.1).unwrap();
        assert!((l_min - 0.155_804_7).abs() < 1e-6, "l = {l_min}");
        assert!(l_min < l_vertex);
    }

    #[test]
    fn eval_l_rejects_bad_a() {
        let configs = capacity_two();
        assert!(matches!(
            eval_l(&[0.5, 0.0], &configs, 1.5),
            Err(OptimError::DomainA(_))
        ));
        assert!(matches!(
            eval_l(&[0.5, 0.0], &configs, 1.0),
            Err(OptimError::DomainA(_))
        ));
    }

    #[test]
    fn qstar_single_slot_polytope() {
        let configs = set(&[&[1]]);
        let lp = solve_qstar(&configs, &[1.0]).unwrap();
        assert!((lp.q_star - 1.0).abs() < 1e-12);
        assert!((lp.x_star.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qstar_capacity_two() {
        let configs = capacity_two();
        let lp = solve_qstar(&configs, &[1.0]).unwrap();
        assert!((lp.q_star - 0.5).abs() < 1e-12);
        let two = configs.index_of(&Configuration(vec![2])).unwrap();
        assert!((lp.x_star.x[two] - 0.5).abs() < 1e-12);
        let oracle = qstar_by_enumeration(&configs, &[1.0]).unwrap();
        assert!((oracle.value - lp.q_star).abs() < 1e-12);
    }

    #[test]
    fn qstar_two_type_instance() {
        let configs = set(&[&[2, 0], &[0, 1]]);
        let rho = [0.5, 0.5];
        let lp = solve_qstar(&configs, &rho).unwrap();
        assert!((lp.q_star - 0.75).abs() < 1e-12);
        let x20 = configs.index_of(&Configuration(vec![2, 0])).unwrap();
        let x01 = configs.index_of(&Configuration(vec![0, 1])).unwrap();
        assert!((lp.x_star.x[x20] - 0.25).abs() < 1e-12);
        assert!((lp.x_star.x[x01] - 0.5).abs() < 1e-12);
        let oracle = qstar_by_enumeration(&configs, &rho).unwrap();
        assert!((oracle.value - lp.q_star).abs() < 1e-12);
    }

    #[test]
    fn xstar_capacity_two_matches_quadratic_closed_form() {
        // Dual reduces to w^2 + w = 1/a with w = e^eta.
        let configs = capacity_two();
        let sol = solve_xstar_a(&configs, &[1.0], 0.1).unwrap();
        let w = (-1.0 + 41.0f64.sqrt()) / 2.0;
        let x1 = 0.1 * w;
        let x2 = 0.05 * (10.0 - w);
        assert!((sol.x_star_a.x[0] - x1).abs() < 1e-10, "{:?}", sol.x_star_a);
        assert!((sol.x_star_a.x[1] - x2).abs() < 1e-10);
        assert!((sol.q_star_a - 0.635_078_105_9).abs() < 1e-9);
        assert!(sol.constraint_residual <= CONSTRAINT_TOL);
        assert!(sol.kkt_residual <= KKT_TOL);
        assert!(sol.pg_value_gap.abs() <= VALUE_CROSS_CHECK_TOL);
    }

    #[test]
    fn xstar_single_slot_is_rho_for_every_a() {
        let configs = set(&[&[1]]);
        for a in [0.5, 0.1, 1e-3] {
            let sol = solve_xstar_a(&configs, &[1.0], a).unwrap();
            assert!((sol.x_star_a.x[0] - 1.0).abs() < 1e-10);
            assert!((sol.q_star_a - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn xstar_small_a_approaches_qstar() {
        let configs = capacity_two();
        let sol = solve_xstar_a(&configs, &[1.0], 1e-4).unwrap();
        // Same quadratic: w = (-1 + sqrt(1 + 4e4)) / 2.
        let w = (-1.0 + (1.0 + 4.0e4f64).sqrt()) / 2.0;
        let q = 1e-4 * w + 0.5e-4 * (1.0e4 - w);
        assert!((sol.q_star_a - q).abs() < 1e-9);
        assert!((sol.q_star_a - 0.504_975).abs() < 1e-5);
    }

    #[test]
    fn qstar_below_qstar_a_on_instances() {
        for (configs, rho) in [
            (capacity_two(), vec![1.0]),
            (set(&[&[2, 0], &[0, 1]]), vec![0.5, 0.5]),
            (set(&[&[3]]), vec![1.0]),
        ] {
            let lp = solve_qstar(&configs, &rho).unwrap();
            for a in [0.5, 0.1, 0.01] {
                let sol = solve_xstar_a(&configs, &rho, a).unwrap();
                assert!(
                    lp.q_star <= sol.q_star_a + 1e-10,
                    "q* {} vs q*,a {} at a={a}",
                    lp.q_star,
                    sol.q_star_a
                );
            }
        }
    }

    #[test]
    fn no_sampled_feasible_point_beats_the_minimizer() {
        let configs = set(&[&[2, 0], &[0, 1]]);
        let rho = [0.5, 0.5];
        let a = 0.1;
        let sol = solve_xstar_a(&configs, &rho, a).unwrap();
        let l_star = eval_l(&sol.x_star_a.x, &configs, a).unwrap();
        let projector = PolytopeProjector::new(&configs, &rho, None);
        let mut state = 0x243f6a8885a308d3u64;
        let mut uniform = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..configs.len()).map(|_| uniform()).collect();
            let feasible = projector.project(&raw);
            let fv = FluidVector::new(feasible.clone());
            assert!(fv.load_residual(&configs, &rho) < 1e-8);
            let l = eval_l(&feasible, &configs, a).unwrap();
            assert!(
                l_star <= l + 1e-9,
                "sampled point beats the minimizer: {l} < {l_star}"
            );
        }
    }

    #[test]
    fn lp_value_is_a_lower_bound_on_sampled_feasible_points() {
        let configs = capacity_two();
        let rho = [1.0];
        let lp = solve_qstar(&configs, &rho).unwrap();
        let projector = PolytopeProjector::new(&configs, &rho, None);
        let mut state = 0x13198a2e03707344u64;
        let mut uniform = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let raw: Vec<f64> = (0..configs.len()).map(|_| 2.0 * uniform()).collect();
            let feasible = projector.project(&raw);
            let q: f64 = feasible.iter().sum();
            assert!(q >= lp.q_star - 1e-8);
        }
    }

    #[test]
    fn a_sweep_monotone_on_capacity_two() {
        let configs = capacity_two();
        let rows = a_sweep(&configs, &[1.0], &[0.1, 0.01, 0.001]).unwrap();
        assert!(rows[0].q_star_a > rows[1].q_star_a);
        assert!(rows[1].q_star_a > rows[2].q_star_a);
        assert!(rows[0].distance_to_face > rows[2].distance_to_face);
        // The face is the single point (0, 0.5); check the distance directly.
        let sol = solve_xstar_a(&configs, &[1.0], 0.1).unwrap();
        let expect = (sol.x_star_a.x[0].powi(2) + (sol.x_star_a.x[1] - 0.5).powi(2)).sqrt();
        assert!((rows[0].distance_to_face - expect).abs() < 1e-6);
    }

    #[test]
    fn a_sweep_constant_on_single_slot() {
        let configs = set(&[&[1]]);
        let rows = a_sweep(&configs, &[1.0], &[0.1, 0.01]).unwrap();
        for row in rows {
            assert!((row.q_star_a - 1.0).abs() < 1e-9);
            assert!(row.distance_to_face < 1e-8);
        }
    }
}
