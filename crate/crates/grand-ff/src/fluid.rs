//! Deterministic fluid-scale dynamics around the equilibrium `x^{*,a}`.
//!
//! The fluid drift mirrors the engine's rates: type-`i` arrivals at density
//! `lambda_i` split over one virtual empty mass `a z(x)` and the occupied
//! configurations that can accept the type, departures drain each slot at
//! its service rate. Linearizing that drift at the equilibrium gives the
//! generator `A` of the local perturbation ODE `d/dt x~ = A x~`.
//!
//! Two structural facts are checked numerically rather than trusted:
//! per-type mass obeys `v_i' A = -mu_i v_i'` exactly (perturbations are
//! pulled back to the zero-load subspace at the service rate), and `A`
//! restricted to that subspace is Hurwitz, certified three independent ways
//! (eigenvalues, the Hessian-of-`L` quadratic form, and direct trajectory
//! decay).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{ConfigurationSet, Scenario};
use crate::optim::{self, OptimError};

/// `v_i' A + mu_i v_i'` must vanish to this tolerance.
pub const ROW_IDENTITY_TOL: f64 = 1e-12;
/// Constraint-row residual allowed for the subspace basis.
pub const BASIS_TOL: f64 = 1e-12;
/// Load residual allowed along integrated trajectories started in the
/// subspace.
pub const TRAJECTORY_TOL: f64 = 1e-8;
/// Trajectories blowing past this multiple of the initial norm abort.
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Availabilities below this are treated as a degenerate equilibrium.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("degenerate equilibrium: availability for type {ctype} is {value}")]
    DegenerateEquilibrium { ctype: usize, value: f64 },
    #[error("matrix is empty; the perturbation subspace is zero-dimensional")]
    ZeroDimensional,
    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,
    #[error("integration unstable: norm exceeded {BLOWUP_FACTOR} x initial at t = {t}")]
    StepInstability { t: f64 },
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("subspace basis residual {0} exceeds tolerance")]
    BasisResidual(f64),
}

/// Per-type arrival and service densities on the fluid scale.
fn rates(scenario: &Scenario) -> (Vec<f64>, Vec<f64>) {
    let lambda = scenario.types.iter().map(|t| t.lambda).collect();
    let mu = scenario.types.iter().map(|t| t.mu).collect();
    (lambda, mu)
}

/// Total customer mass `z(x) = sum_k (sum_i k_i) x_k`.
fn total_mass(configs: &ConfigurationSet, x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(k, &v)| configs.config(k).total() as f64 * v)
        .sum()
}

/// Servers available to type `i`: the virtual empty mass `a z(x)` plus every
/// occupied configuration that still accepts the type.
pub fn availability(configs: &ConfigurationSet, x: &[f64], a: f64, ctype: usize) -> f64 {
    let occupied: f64 = configs
        .acceptors(ctype)
        .iter()
        .map(|&(k, _)| x[k])
        .sum();
    a * total_mass(configs, x) + occupied
}

/// Nonlinear fluid drift of the occupancy densities under the greedy-random
/// policy with parameter `a`. Built from the same rate expressions the
/// engine uses, per unit of the scale parameter.
pub fn fluid_drift(
    scenario: &Scenario,
    a: f64,
    x: &[f64],
) -> Result<Vec<f64>, FluidError> {
    let configs = &scenario.configs;
    let (lambda, mu) = rates(scenario);
    let z = total_mass(configs, x);
    let avail: Vec<f64> = (0..configs.dim())
        .map(|i| availability(configs, x, a, i))
        .collect();
    for (i, &v) in avail.iter().enumerate() {
        if v <= DEGENERACY_TOL {
            return Err(FluidError::DegenerateEquilibrium { ctype: i, value: v });
        }
    }
    let mut drift = vec![0.0; configs.len()];
    for k in 0..configs.len() {
        let counts = &configs.config(k).0;
        let mut d = 0.0;
        for i in 0..configs.dim() {
            if let Some(child) = configs.departure_child(k, i) {
                // Arrivals promoting k - e_i into k, departures draining k.
                let donor = match child {
                    Some(idx) => x[idx],
                    None => a * z,
                };
                d += lambda[i] * donor / avail[i] - counts[i] as f64 * mu[i] * x[k];
            }
            if let Some(parent) = configs.accept_target(k, i) {
                // Arrivals promoting k into k + e_i, departures feeding k back.
                d -= lambda[i] * x[k] / avail[i]
                    - (counts[i] + 1) as f64 * mu[i] * x[parent];
            }
        }
        drift[k] = d;
    }
    Ok(drift)
}

/// Generator of the local perturbation ODE together with the zero-load
/// subspace machinery.
#[derive(Debug, Clone)]
pub struct LflMatrix {
    /// Full `|K| x |K|` generator.
    pub a_mat: DMatrix<f64>,
    /// Orthonormal columns spanning `{ x~ : sum_k k_i x~_k = 0 }`.
    pub basis: DMatrix<f64>,
    /// `B' A B`, the generator restricted to the subspace.
    pub restricted: DMatrix<f64>,
    /// Equilibrium availabilities per type.
    pub availability: Vec<f64>,
}

/// Assemble the exact linearization of [`fluid_drift`] at `x_star`.
///
/// Each arrival term `lambda_i xb_j(x) / avail_i(x)` contributes its two
/// quotient-rule pieces; the service terms are already linear. The matrix is
/// materialized column by column by applying the linear map to unit vectors.
pub fn build_lfl_matrix(
    scenario: &Scenario,
    a: f64,
    x_star: &[f64],
) -> Result<LflMatrix, FluidError> {
    let configs = &scenario.configs;
    let n = configs.len();
    let (lambda, mu) = rates(scenario);
    let z_star = total_mass(configs, x_star);
    let avail: Vec<f64> = (0..configs.dim())
        .map(|i| availability(configs, x_star, a, i))
        .collect();
    for (i, &v) in avail.iter().enumerate() {
        if v <= DEGENERACY_TOL {
            return Err(FluidError::DegenerateEquilibrium { ctype: i, value: v });
        }
    }

    // The linearized drift in direction `xt`.
    let map = |xt: &[f64]| -> Vec<f64> {
        let s = total_mass(configs, xt);
        let avail_dir: Vec<f64> = (0..configs.dim())
            .map(|i| {
                a * s
                    + configs
                        .acceptors(i)
                        .iter()
                        .map(|&(k, _)| xt[k])
                        .sum::<f64>()
            })
            .collect();
        let mut out = vec![0.0; n];
        for k in 0..n {
            let counts = &configs.config(k).0;
            let mut d = 0.0;
            for i in 0..configs.dim() {
                if let Some(child) = configs.departure_child(k, i) {
                    let (donor_star, donor_dir) = match child {
                        Some(idx) => (x_star[idx], xt[idx]),
                        None => (a * z_star, a * s),
                    };
                    d += lambda[i]
                        * (donor_dir / avail[i]
                            - donor_star * avail_dir[i] / (avail[i] * avail[i]))
                        - counts[i] as f64 * mu[i] * xt[k];
                }
                if let Some(parent) = configs.accept_target(k, i) {
                    d -= lambda[i]
                        * (xt[k] / avail[i]
                            - x_star[k] * avail_dir[i] / (avail[i] * avail[i]))
                        - (counts[i] + 1) as f64 * mu[i] * xt[parent];
                }
            }
            out[k] = d;
        }
        out
    };

    let mut a_mat = DMatrix::from_element(n, n, 0.0);
    let mut unit = vec![0.0; n];
    for m in 0..n {
        unit[m] = 1.0;
        let col = map(&unit);
        for (r, &v) in col.iter().enumerate() {
            a_mat[(r, m)] = v;
        }
        unit[m] = 0.0;
    }

    let basis = basis_tilde(configs)?;
    let restricted = basis.transpose() * &a_mat * &basis;
    Ok(LflMatrix {
        a_mat,
        basis,
        restricted,
        availability: avail,
    })
}

impl LflMatrix {
    /// Worst violation of `v_i' A = -mu_i v_i'` over all types, with
    /// `v_i[k] = k_i`.
    pub fn row_identity_residual(&self, scenario: &Scenario) -> f64 {
        let configs = &scenario.configs;
        let n = configs.len();
        let mut worst: f64 = 0.0;
        for i in 0..configs.dim() {
            let v = DVector::from_fn(n, |k, _| configs.config(k).0[i] as f64);
            let lhs = self.a_mat.transpose() * &v;
            let mu = scenario.types[i].mu;
            for k in 0..n {
                worst = worst.max((lhs[k] + mu * v[k]).abs());
            }
        }
        worst
    }

    /// Dimension of the zero-load subspace.
    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Orthonormal basis of `{ x~ : sum_k k_i x~_k = 0 for all i }`, computed
/// from the small eigenvalues of the Gram matrix of the constraint rows.
pub fn basis_tilde(configs: &ConfigurationSet) -> Result<DMatrix<f64>, FluidError> {
    let n = configs.len();
    let dim = configs.dim();
    let v = DMatrix::from_fn(dim, n, |i, k| configs.config(k).0[i] as f64);
    // Unit vectors make the constraint rows independent, so the null space
    // has dimension exactly n - dim.
    let null_dim = n - dim;
    if null_dim == 0 {
        return Ok(DMatrix::from_element(n, 0, 0.0));
    }
    let gram = v.transpose() * &v;
    let eigen = gram
        .symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    let mut basis = DMatrix::from_element(n, null_dim, 0.0);
    for (col, &idx) in order.iter().take(null_dim).enumerate() {
        let mut vec = eigen.eigenvectors.column(idx).into_owned();
        // Canonical sign: first significant component positive.
        if let Some(lead) = vec.iter().find(|c| c.abs() > 1e-9) {
            if *lead < 0.0 {
                vec = -vec;
            }
        }
        basis.set_column(col, &vec);
    }
    let residual = (&v * &basis).amax();
    if residual > BASIS_TOL {
        return Err(FluidError::BasisResidual(residual));
    }
    Ok(basis)
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64, FluidError> {
    if m.nrows() == 0 {
        return Err(FluidError::ZeroDimensional);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-13, 100_000)
        .ok_or(FluidError::EigenNonConvergence)?;
    let eigen = schur
        .complex_eigenvalues();
    Ok(eigen.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Diagonal Hessian of `L^(a)` at the equilibrium: `[-log a]^{-1} / x_k`.
pub fn lyapunov_hessian(x_star: &[f64], a: f64) -> Result<DVector<f64>, FluidError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(FluidError::Optim(OptimError::DomainA(a)));
    }
    let scale = 1.0 / -a.ln();
    Ok(DVector::from_iterator(
        x_star.len(),
        x_star.iter().map(|&x| scale / x),
    ))
}

/// Largest eigenvalue of the symmetrized `B' H A B`: the worst-case growth
/// rate of the quadratic `0.5 x~' H x~` along the restricted dynamics.
/// Negative means the quadratic strictly decays on the subspace. `None` when
/// the subspace is zero-dimensional (vacuously stable).
pub fn lyapunov_check(
    a_mat: &DMatrix<f64>,
    basis: &DMatrix<f64>,
    hessian: &DVector<f64>,
) -> Result<Option<f64>, FluidError> {
    if basis.ncols() == 0 {
        return Ok(None);
    }
    let h = DMatrix::from_diagonal(hessian);
    let m = basis.transpose() * h * a_mat * basis;
    let sym = (&m + m.transpose()) * 0.5;
    let eigen = sym.symmetric_eigen();
    Ok(Some(
        eigen.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}

#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Earliest recorded time after which the norm never again exceeds half
    /// the initial norm; `None` if that never happens within the horizon.
    pub half_norm_time: Option<f64>,
    /// `max_t ||x(t)|| / ||x(0)||`.
    pub max_ratio: f64,
}

/// Classical fixed-step fourth-order integration of `d/dt x = A x`.
pub fn integrate_ode(
    a_mat: &DMatrix<f64>,
    x0: &DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<OdeTrajectory, FluidError> {
    if !(dt > 0.0) {
        return Err(FluidError::BadStep(dt));
    }
    let steps = (t_end / dt).ceil() as usize;
    let norm0 = x0.norm();
    let mut x = x0.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    norms.push(norm0);
    states.push(x.clone());
    for s in 0..steps {
        let h = dt.min(t_end - s as f64 * dt);
        if h <= 0.0 {
            break;
        }
        let k1 = a_mat * &x;
        let k2 = a_mat * (&x + &k1 * (h / 2.0));
        let k3 = a_mat * (&x + &k2 * (h / 2.0));
        let k4 = a_mat * (&x + &k3 * h);
        x = &x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
        let t = (s as f64 * dt + h).min(t_end);
        let norm = x.norm();
        if norm0 > 0.0 && norm > BLOWUP_FACTOR * norm0 {
            return Err(FluidError::StepInstability { t });
        }
        times.push(t);
        norms.push(norm);
        states.push(x.clone());
    }
    let half = norm0 / 2.0;
    let mut half_norm_time = None;
    if norm0 == 0.0 {
        half_norm_time = Some(0.0);
    } else {
        // Scan from the tail for the last excursion above half.
        let mut cut = None;
        for (idx, &n) in norms.iter().enumerate().rev() {
            if n > half {
                cut = Some(idx);
                break;
            }
        }
        match cut {
            None => half_norm_time = Some(0.0),
            Some(idx) if idx + 1 < times.len() => half_norm_time = Some(times[idx + 1]),
            Some(_) => {}
        }
    }
    let max_ratio = if norm0 > 0.0 {
        norms.iter().copied().fold(0.0, f64::max) / norm0
    } else {
        0.0
    };
    Ok(OdeTrajectory {
        times,
        norms,
        states,
        half_norm_time,
        max_ratio,
    })
}

/// Full stability report for one scenario and parameter `a`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FluidReport {
    pub a: f64,
    pub q_star_a: f64,
    pub subspace_dim: usize,
    /// `None` when the subspace is zero-dimensional.
    pub abscissa: Option<f64>,
    pub lyapunov_max: Option<f64>,
    pub half_life: Option<f64>,
    /// Peak norm overshoot `max ||x~(t)|| / ||x~(0)||` along the test
    /// trajectory.
    pub decay_constant: Option<f64>,
    pub residuals: FluidResiduals,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FluidResiduals {
    pub row_identity: f64,
    pub basis: f64,
    pub equilibrium_constraint: f64,
    /// Worst load-constraint violation along the integrated trajectory.
    pub trajectory_constraint: Option<f64>,
    /// Forward finite-difference check of the generator at `delta = 1e-6`.
    pub finite_difference: f64,
}

/// Compute the equilibrium, assemble the generator, and run all stability
/// diagnostics for one scenario.
pub fn fluid_report(scenario: &Scenario, a: f64) -> Result<FluidReport, FluidError> {
    let rho = scenario.rho();
    let configs = &scenario.configs;
    let sol = optim::solve_xstar_a(configs, &rho, a)?;
    let x_star = &sol.x_star_a.x;
    let lfl = build_lfl_matrix(scenario, a, x_star)?;
    let row_identity = lfl.row_identity_residual(scenario);
    let basis_res = {
        let v = optim::load_matrix(configs);
        (&v * &lfl.basis).amax()
    };
    let fd = finite_difference_residual(scenario, a, x_star, &lfl.a_mat, 1e-6)?;

    let dim = lfl.subspace_dim();
    if dim == 0 {
        return Ok(FluidReport {
            a,
            q_star_a: sol.q_star_a,
            subspace_dim: 0,
            abscissa: None,
            lyapunov_max: None,
            half_life: None,
            decay_constant: None,
            residuals: FluidResiduals {
                row_identity,
                basis: basis_res,
                equilibrium_constraint: sol.constraint_residual,
                trajectory_constraint: None,
                finite_difference: fd,
            },
        });
    }

    let abscissa = spectral_abscissa(&lfl.restricted)?;
    let hessian = lyapunov_hessian(x_star, a)?;
    let lyapunov_max = lyapunov_check(&lfl.a_mat, &lfl.basis, &hessian)?;

    // Decay run from a unit vector inside the subspace.
    let x0 = lfl.basis.column(0).into_owned();
    let predicted_half = std::f64::consts::LN_2 / (-abscissa).max(1e-12);
    let mut t_end = 8.0 * predicted_half;
    let dt = (predicted_half / 500.0).min(1e-3);
    let mut trajectory = integrate_ode(&lfl.a_mat, &x0, t_end, dt)?;
    for _ in 0..4 {
        if trajectory.half_norm_time.is_some() {
            break;
        }
        t_end *= 4.0;
        trajectory = integrate_ode(&lfl.a_mat, &x0, t_end, dt)?;
    }
    let v = optim::load_matrix(configs);
    let trajectory_constraint = trajectory
        .states
        .iter()
        .map(|s| (&v * s).amax())
        .fold(0.0, f64::max);

    Ok(FluidReport {
        a,
        q_star_a: sol.q_star_a,
        subspace_dim: dim,
        abscissa: Some(abscissa),
        lyapunov_max,
        half_life: trajectory.half_norm_time,
        decay_constant: Some(trajectory.max_ratio),
        residuals: FluidResiduals {
            row_identity,
            basis: basis_res,
            equilibrium_constraint: sol.constraint_residual,
            trajectory_constraint: Some(trajectory_constraint),
            finite_difference: fd,
        },
    })
}

/// Worst entrywise gap between `a_mat` and the forward finite difference
/// `(drift(x* + delta e_m) - drift(x*)) / delta` of the nonlinear drift.
pub fn finite_difference_residual(
    scenario: &Scenario,
    a: f64,
    x_star: &[f64],
    a_mat: &DMatrix<f64>,
    delta: f64,
) -> Result<f64, FluidError> {
    let n = x_star.len();
    let base = fluid_drift(scenario, a, x_star)?;
    let mut worst: f64 = 0.0;
    for m in 0..n {
        let mut plus = x_star.to_vec();
        plus[m] += delta;
        let d_plus = fluid_drift(scenario, a, &plus)?;
        for k in 0..n {
            let fd = (d_plus[k] - base[k]) / delta;
            worst = worst.max((fd - a_mat[(k, m)]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Configuration, ConfigurationSet, CustomerType, Normalization};

    fn scenario(gens: &[&[u32]], types: &[(f64, f64)]) -> Scenario {
        let gens: Vec<Configuration> = gens.iter().map(|g| Configuration(g.to_vec())).collect();
        let configs = ConfigurationSet::from_generators(&gens).unwrap();
        Scenario::new(
            types
                .iter()
                .map(|&(lambda, mu)| CustomerType { lambda, mu })
                .collect(),
            configs,
            1.0,
            Normalization::Strict,
        )
        .unwrap()
    }

    fn mm_infinity() -> Scenario {
        scenario(&[&[1]], &[(1.0, 1.0)])
    }

    fn capacity_two() -> Scenario {
        scenario(&[&[2]], &[(1.0, 1.0)])
    }

    fn two_type() -> Scenario {
        scenario(&[&[2, 0], &[0, 1]], &[(0.5, 1.0), (0.5, 1.0)])
    }

    fn equilibrium(scn: &Scenario, a: f64) -> Vec<f64> {
        optim::solve_xstar_a(&scn.configs, &scn.rho(), a)
            .unwrap()
            .x_star_a
            .x
    }

    #[test]
    fn mm_infinity_generator_is_minus_mu() {
        let scn = mm_infinity();
        let x_star = equilibrium(&scn, 0.1);
        let lfl = build_lfl_matrix(&scn, 0.1, &x_star).unwrap();
        assert_eq!(lfl.subspace_dim(), 0);
        assert!((lfl.a_mat[(0, 0)] + 1.0).abs() < 1e-12, "{}", lfl.a_mat[(0, 0)]);
        assert!(lfl.row_identity_residual(&scn) < ROW_IDENTITY_TOL);
    }

    #[test]
    fn row_identity_holds_on_all_instances() {
        for scn in [mm_infinity(), capacity_two(), two_type()] {
            for a in [0.1, 0.01] {
                let x_star = equilibrium(&scn, a);
                let lfl = build_lfl_matrix(&scn, a, &x_star).unwrap();
                let res = lfl.row_identity_residual(&scn);
                assert!(res < ROW_IDENTITY_TOL, "residual {res} at a={a}");
            }
        }
    }

    #[test]
    fn generator_matches_forward_finite_differences() {
        for scn in [capacity_two(), two_type()] {
            for a in [0.1, 0.01] {
                let x_star = equilibrium(&scn, a);
                let lfl = build_lfl_matrix(&scn, a, &x_star).unwrap();
                let res =
                    finite_difference_residual(&scn, a, &x_star, &lfl.a_mat, 1e-6).unwrap();
                assert!(res < 1e-4, "fd residual {res} at a={a}");
            }
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point_of_the_drift() {
        let scn = capacity_two();
        let x_star = equilibrium(&scn, 0.1);
        let drift = fluid_drift(&scn, 0.1, &x_star).unwrap();
        for d in drift {
            assert!(d.abs() < 1e-9, "drift component {d}");
        }
    }

    #[test]
    fn basis_examples() {
        let scn = mm_infinity();
        let b = basis_tilde(&scn.configs).unwrap();
        assert_eq!(b.ncols(), 0);

        let scn = capacity_two();
        let b = basis_tilde(&scn.configs).unwrap();
        assert_eq!(b.ncols(), 1);
        // Null space of (1, 2): +-(2, -1)/sqrt(5).
        let expect = [2.0 / 5.0f64.sqrt(), -1.0 / 5.0f64.sqrt()];
        let same = (b[(0, 0)] - expect[0]).abs() < 1e-12 && (b[(1, 0)] - expect[1]).abs() < 1e-12;
        let flipped =
            (b[(0, 0)] + expect[0]).abs() < 1e-12 && (b[(1, 0)] + expect[1]).abs() < 1e-12;
        assert!(same || flipped, "basis {b}");

        let scn = two_type();
        let b = basis_tilde(&scn.configs).unwrap();
        assert_eq!(b.ncols(), 1);
    }

    #[test]
    fn abscissa_examples() {
        let m = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!((spectral_abscissa(&m).unwrap() + 1.0).abs() < 1e-12);
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]);
        assert!((spectral_abscissa(&m).unwrap() + 1.0).abs() < 1e-12);
        let empty = DMatrix::from_element(0, 0, 0.0);
        assert!(matches!(
            spectral_abscissa(&empty),
            Err(FluidError::ZeroDimensional)
        ));
    }

    #[test]
    fn restricted_generator_is_hurwitz() {
        for scn in [capacity_two(), two_type()] {
            for a in [0.1, 0.01] {
                let x_star = equilibrium(&scn, a);
                let lfl = build_lfl_matrix(&scn, a, &x_star).unwrap();
                let abscissa = spectral_abscissa(&lfl.restricted).unwrap();
                assert!(abscissa < 0.0, "abscissa {abscissa} at a={a}");
            }
        }
    }

    #[test]
    fn lyapunov_examples() {
        // H = I, A = -I on a full basis: max eigenvalue -1.
        let a_mat = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let basis = DMatrix::identity(2, 2);
        let h = DVector::from_element(2, 1.0);
        let max = lyapunov_check(&a_mat, &basis, &h).unwrap().unwrap();
        assert!((max + 1.0).abs() < 1e-12);

        // Zero-dimensional subspace: vacuously stable.
        let empty = DMatrix::from_element(2, 0, 0.0);
        assert!(lyapunov_check(&a_mat, &empty, &h).unwrap().is_none());
    }

    #[test]
    fn lyapunov_negative_on_instances() {
        for scn in [capacity_two(), two_type()] {
            for a in [0.1, 0.01] {
                let x_star = equilibrium(&scn, a);
                let lfl = build_lfl_matrix(&scn, a, &x_star).unwrap();
                let h = lyapunov_hessian(&x_star, a).unwrap();
                let max = lyapunov_check(&lfl.a_mat, &lfl.basis, &h)
                    .unwrap()
                    .unwrap();
                assert!(max < 0.0, "lyapunov max {max} at a={a}");
            }
        }
    }

    #[test]
    fn scalar_ode_matches_the_exponential()  {
        let a_mat = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let x0 = DVector::from_row_slice(&[1.0]);
        let traj = integrate_ode(&a_mat, &x0, 1.0, 1e-3).unwrap();
        let last = *traj.norms.last().unwrap();
        assert!((last - (-1.0f64).exp()).abs() < 1e-8, "{last}");
    }

    #[test]
    fn zero_start_stays_zero() {
        let a_mat = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let x0 = DVector::from_row_slice(&[0.0]);
        let traj = integrate_ode(&a_mat, &x0, 1.0, 0.01).unwrap();
        assert!(traj.norms.iter().all(|&n| n == 0.0));
        assert_eq!(traj.half_norm_time, Some(0.0));
    }

    #[test]
    fn unstable_integration_aborts() {
        let a_mat = DMatrix::from_row_slice(1, 1, &[40.0]);
        let x0 = DVector::from_row_slice(&[1.0]);
        let err = integrate_ode(&a_mat, &x0, 1.0, 0.01).unwrap_err();
        assert!(matches!(err, FluidError::StepInstability { .. }));
    }

    #[test]
    fn half_life_matches_abscissa_on_capacity_two() {
        let report = fluid_report(&capacity_two(), 0.1).unwrap();
        let abscissa = report.abscissa.unwrap();
        let half = report.half_life.unwrap();
        let predicted = std::f64::consts::LN_2 / -abscissa;
        assert!(
            (half / predicted - 1.0).abs() < 0.1,
            "half {half}, predicted {predicted}"
        );
        assert!(report.residuals.trajectory_constraint.unwrap() < TRAJECTORY_TOL);
        assert!(report.residuals.row_identity < ROW_IDENTITY_TOL);
    }

    #[test]
    fn report_on_zero_dimensional_subspace_is_trivial() {
        let report = fluid_report(&mm_infinity(), 0.1).unwrap();
        assert_eq!(report.subspace_dim, 0);
        assert!(report.abscissa.is_none());
        assert!(report.lyapunov_max.is_none());
        assert!(report.residuals.row_identity < ROW_IDENTITY_TOL);
    }
}
