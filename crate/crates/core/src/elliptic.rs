//! Matrix-free conjugate-gradient solves of the stationary zero-flux
//! problems the analytic bounds rely on: the Helmholtz-type auxiliary
//! problem `-beta lap(w) + eta w = chi` and the zero-mean problem
//! `-beta lap(v*) = chi - 1/|Omega|`.
//!
//! Both discrete operators are symmetric; the Helmholtz operator is positive
//! definite and the pure-Neumann Laplacian is semi-definite with the
//! constant vector as its null space, which the solver projects away.

use thiserror::Error;

use crate::grid::{laplacian_apply, quadrature, Grid, ScalarField};
use crate::model::ModelParams;

#[derive(Debug, Error)]
pub enum EllipticError {
    #[error("no convergence after {iterations} iterations (residual {residual:e}, tol {tol:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("right-hand side violates the solvability condition: quadrature(chi) = {integral}")]
    SolvabilityViolated { integral: f64 },
    #[error("portal mask is empty")]
    EmptyPortal,
    #[error("solution lost positivity (min {min:e})")]
    LostPositivity { min: f64 },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// A converged stationary solve: the field, the max-norm of its discrete
/// residual, and the iteration count.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub field: ScalarField,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// `mass * x - diffusion * lap(x)` with the zero-flux Laplacian.
pub(crate) struct HelmholtzOp {
    pub grid: Grid,
    pub mass: f64,
    pub diffusion: f64,
}

impl HelmholtzOp {
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        laplacian_apply(&self.grid, x, out);
        for (o, &xv) in out.iter_mut().zip(x) {
            *o = self.mass * xv - self.diffusion * *o;
        }
    }
}

/// Reusable buffers for [`cg`]; sized lazily to the problem.
#[derive(Default)]
pub(crate) struct CgScratch {
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    b: Vec<f64>,
}

pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn subtract_mean(a: &mut [f64]) {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    for v in a.iter_mut() {
        *v -= mean;
    }
}

/// Conjugate gradients on the given operator, iterating until the max-norm
/// of the residual drops to `tol`.
///
/// The recursively updated residual drives the iteration; on a convergence
/// candidate the true residual `b - A x` is recomputed and, if it disagrees,
/// the iteration restarts from it. With `zero_mean` set, the right-hand side
/// and every iterate are projected onto the zero-mean subspace, which keeps
/// the semi-definite pure-Neumann solve away from its constant null space.
pub(crate) fn cg(
    op: &HelmholtzOp,
    b_in: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
    zero_mean: bool,
    ws: &mut CgScratch,
) -> CgOutcome {
    let n = b_in.len();
    ws.r.resize(n, 0.0);
    ws.p.resize(n, 0.0);
    ws.ap.resize(n, 0.0);
    ws.b.clear();
    ws.b.extend_from_slice(b_in);
    if zero_mean {
        subtract_mean(&mut ws.b);
        subtract_mean(x);
    }

    // r = b - A x
    op.apply(x, &mut ws.ap);
    for k in 0..n {
        ws.r[k] = ws.b[k] - ws.ap[k];
    }
    if zero_mean {
        subtract_mean(&mut ws.r);
    }

    let mut res = max_norm(&ws.r);
    if res <= tol {
        return CgOutcome {
            iterations: 0,
            residual_norm: res,
            converged: true,
        };
    }

    ws.p.copy_from_slice(&ws.r);
    let mut rho = dot(&ws.r, &ws.r);

    for iter in 1..=max_iters {
        op.apply(&ws.p, &mut ws.ap);
        let pap = dot(&ws.p, &ws.ap);
        if pap <= 0.0 || !pap.is_finite() {
            // Stagnation: the search direction carries no energy.
            break;
        }
        let step = rho / pap;
        for k in 0..n {
            x[k] += step * ws.p[k];
            ws.r[k] -= step * ws.ap[k];
        }
        if zero_mean {
            subtract_mean(x);
            subtract_mean(&mut ws.r);
        }
        res = max_norm(&ws.r);
        if res <= tol {
            // Confirm against the true residual before declaring victory.
            op.apply(x, &mut ws.ap);
            for k in 0..n {
                ws.r[k] = ws.b[k] - ws.ap[k];
            }
            if zero_mean {
                subtract_mean(&mut ws.r);
            }
            res = max_norm(&ws.r);
            if res <= tol {
                return CgOutcome {
                    iterations: iter,
                    residual_norm: res,
                    converged: true,
                };
            }
            // Drift between recursive and true residual: restart from here.
            ws.p.copy_from_slice(&ws.r);
            rho = dot(&ws.r, &ws.r);
            continue;
        }
        let rho_next = dot(&ws.r, &ws.r);
        let beta = rho_next / rho;
        rho = rho_next;
        for k in 0..n {
            ws.p[k] = ws.r[k] + beta * ws.p[k];
        }
    }

    // Report the true residual on failure.
    op.apply(x, &mut ws.ap);
    for k in 0..n {
        ws.r[k] = ws.b[k] - ws.ap[k];
    }
    if zero_mean {
        subtract_mean(&mut ws.r);
    }
    CgOutcome {
        iterations: max_iters,
        residual_norm: max_norm(&ws.r),
        converged: false,
    }
}

pub(crate) fn default_max_iters(grid: &Grid) -> usize {
    50 * (grid.nx() + grid.ny())
}

/// Solve `-beta lap(w) + eta w = chi` with zero-flux boundaries.
///
/// The discrete operator is an M-matrix, so the solution of a non-negative,
/// non-trivial right-hand side is strictly positive; this is checked on
/// return. Integrating the equation shows `eta * quadrature(w) = 1` for a
/// normalized `chi`.
pub fn solve_aux(
    grid: Grid,
    chi: &ScalarField,
    params: &ModelParams,
    tol: f64,
) -> Result<EllipticSolution, EllipticError> {
    params.validate()?;
    assert_eq!(grid, chi.grid(), "chi must live on the given grid");
    let op = HelmholtzOp {
        grid,
        mass: params.eta,
        diffusion: params.beta,
    };
    // Warm start from the zero-diffusion balance chi / eta.
    let mut x: Vec<f64> = chi.values().iter().map(|&c| c / params.eta).collect();
    let mut ws = CgScratch::default();
    let out = cg(
        &op,
        chi.values(),
        &mut x,
        tol,
        default_max_iters(&grid),
        false,
        &mut ws,
    );
    if !out.converged {
        return Err(EllipticError::NoConvergence {
            iterations: out.iterations,
            residual: out.residual_norm,
            tol,
        });
    }
    let field = ScalarField::from_values_unchecked(grid, x);
    let min = field.min();
    if min <= 0.0 {
        return Err(EllipticError::LostPositivity { min });
    }
    Ok(EllipticSolution {
        field,
        residual_norm: out.residual_norm,
        iterations: out.iterations,
    })
}

/// Minimum of a stationary solution over the portal cells.
pub fn v_threshold(sol: &EllipticSolution, theta_mask: &[usize]) -> Result<f64, EllipticError> {
    if theta_mask.is_empty() {
        return Err(EllipticError::EmptyPortal);
    }
    let values = sol.field.values();
    let min = theta_mask
        .iter()
        .map(|&k| values[k])
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(EllipticError::LostPositivity { min });
    }
    Ok(min)
}

/// Solve the zero-mean problem `-beta lap(v*) = chi - 1/|Omega|` with
/// zero-flux boundaries.
///
/// The right-hand side integrates to zero because `chi` is normalized; this
/// is required for solvability and checked up front. The free additive
/// constant is fixed by returning the zero-mean solution.
pub fn solve_vstar(
    grid: Grid,
    chi: &ScalarField,
    params: &ModelParams,
    tol: f64,
) -> Result<EllipticSolution, EllipticError> {
    params.validate()?;
    assert_eq!(grid, chi.grid(), "chi must live on the given grid");
    let integral = quadrature(chi);
    if (integral - 1.0).abs() > 1e-8 {
        return Err(EllipticError::SolvabilityViolated { integral });
    }
    let inv_area = 1.0 / grid.area();
    let b: Vec<f64> = chi.values().iter().map(|&c| c - inv_area).collect();
    let op = HelmholtzOp {
        grid,
        mass: 0.0,
        diffusion: params.beta,
    };
    let mut x = vec![0.0; grid.cell_count()];
    let mut ws = CgScratch::default();
    let out = cg(
        &op,
        &b,
        &mut x,
        tol,
        default_max_iters(&grid),
        true,
        &mut ws,
    );
    if !out.converged {
        return Err(EllipticError::NoConvergence {
            iterations: out.iterations,
            residual: out.residual_norm,
            tol,
        });
    }
    subtract_mean(&mut x);
    Ok(EllipticSolution {
        field: ScalarField::from_values_unchecked(grid, x),
        residual_norm: out.residual_norm,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_chi, PortalSpec};

    fn healing_params() -> ModelParams {
        ModelParams {
            alpha: 0.6,
            beta: 0.3,
            gamma: 0.9,
            delta: 3.7,
            eta: 0.2,
            u_min: 0.05,
            kappa: 0.01,
        }
    }

    fn default_portal(grid: Grid) -> crate::grid::Portal {
        build_chi(grid, &PortalSpec::new((1.0, 1.0), 0.2)).unwrap()
    }

    #[test]
    fn aux_with_constant_rhs_is_constant() {
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        let c = 0.7;
        let rhs = ScalarField::constant(grid, c).unwrap();
        let sol = solve_aux(grid, &rhs, &p, 1e-12).unwrap();
        for &v in sol.field.values() {
            assert!((v - c / p.eta).abs() <= 1e-10);
        }
        assert!(sol.residual_norm <= 1e-12);
    }

    #[test]
    fn aux_integral_identity() {
        // Integrating the equation over the domain kills the Laplacian,
        // leaving eta * quadrature(w) = quadrature(chi) = 1.
        let grid = Grid::unit_square(64).unwrap();
        let p = healing_params();
        let portal = default_portal(grid);
        let sol = solve_aux(grid, portal.chi(), &p, 1e-10).unwrap();
        let lhs = p.eta * quadrature(&sol.field);
        assert!((lhs - 1.0).abs() <= 1e-8, "eta * quad(w) = {lhs}");
        assert!(sol.field.min() > 0.0);
        assert!(sol.residual_norm <= 1e-10);
    }

    #[test]
    fn v_threshold_constant_case_and_ordering() {
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        let c = 0.5;
        let rhs = ScalarField::constant(grid, c).unwrap();
        let sol = solve_aux(grid, &rhs, &p, 1e-12).unwrap();
        let mask: Vec<usize> = (0..5).collect();
        let thr = v_threshold(&sol, &mask).unwrap();
        assert!((thr - c / p.eta).abs() <= 1e-10);
        assert!(thr <= sol.field.max());
        assert!(matches!(
            v_threshold(&sol, &[]),
            Err(EllipticError::EmptyPortal)
        ));
    }

    #[test]
    fn v_threshold_positive_on_default_geometry() {
        let grid = Grid::unit_square(64).unwrap();
        let p = healing_params();
        let portal = default_portal(grid);
        let sol = solve_aux(grid, portal.chi(), &p, 1e-10).unwrap();
        let thr = v_threshold(&sol, portal.mask()).unwrap();
        assert!(thr > 0.0);
        assert!(thr <= sol.field.max());
    }

    #[test]
    fn vstar_zero_rhs_gives_zero() {
        // Portal covering the whole domain: chi = 1/|Omega| cancels the
        // forcing and the zero-mean solution is identically zero.
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        let chi = ScalarField::constant(grid, 1.0 / grid.area()).unwrap();
        let sol = solve_vstar(grid, &chi, &p, 1e-12).unwrap();
        assert!(sol.field.max_abs() <= 1e-12);
    }

    #[test]
    fn vstar_is_zero_mean_and_converged() {
        let grid = Grid::unit_square(64).unwrap();
        let p = healing_params();
        let portal = default_portal(grid);
        let sol = solve_vstar(grid, portal.chi(), &p, 1e-10).unwrap();
        assert!(quadrature(&sol.field).abs() <= 1e-10);
        assert!(sol.residual_norm <= 1e-10);
        assert!(sol.field.max() > 0.0);
    }

    #[test]
    fn vstar_rhs_balances_before_solving() {
        let grid = Grid::unit_square(32).unwrap();
        let portal = default_portal(grid);
        let inv_area = 1.0 / grid.area();
        let b = ScalarField::from_values(
            grid,
            portal.chi().values().iter().map(|&c| c - inv_area).collect(),
        )
        .unwrap();
        assert!(quadrature(&b).abs() <= 1e-12);
    }

    #[test]
    fn vstar_rejects_unnormalized_rhs() {
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        let chi = ScalarField::constant(grid, 2.0).unwrap();
        assert!(matches!(
            solve_vstar(grid, &chi, &p, 1e-10),
            Err(EllipticError::SolvabilityViolated { .. })
        ));
    }

    #[test]
    fn no_convergence_is_reported() {
        let grid = Grid::unit_square(64).unwrap();
        let p = healing_params();
        let portal = default_portal(grid);
        // An unreachable tolerance must surface as NoConvergence.
        let res = solve_vstar(grid, portal.chi(), &p, 1e-300);
        assert!(matches!(res, Err(EllipticError::NoConvergence { .. })));
    }

    /// Max-norm error of a field against a closed-form function of the
    /// cell-center coordinates.
    fn error_vs_exact(f: &ScalarField, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let g = f.grid();
        let mut err = 0.0f64;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let (x, y) = g.center(i, j);
                err = err.max((f.get(i, j) - exact(x, y)).abs());
            }
        }
        err
    }

    #[test]
    fn aux_grid_convergence_is_second_order() {
        // Manufactured solution w = 2 + cos(pi x) cos(pi y): satisfies the
        // zero-flux condition, so the mirror ghost is exact and the error is
        // pure truncation, halving h divides it by ~4.
        use std::f64::consts::PI;
        let p = healing_params();
        let exact = |x: f64, y: f64| 2.0 + (PI * x).cos() * (PI * y).cos();
        let solve = |n: usize| {
            let grid = Grid::unit_square(n).unwrap();
            let rhs = ScalarField::from_fn(grid, |x, y| {
                2.0 * p.eta
                    + (p.eta + 2.0 * p.beta * PI * PI) * (PI * x).cos() * (PI * y).cos()
            })
            .unwrap();
            solve_aux(grid, &rhs, &p, 1e-11).unwrap().field
        };
        let e32 = error_vs_exact(&solve(32), exact);
        let e64 = error_vs_exact(&solve(64), exact);
        let ratio = e32 / e64;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "ratio {ratio}, errors {e32} vs {e64}"
        );
    }

    #[test]
    fn vstar_grid_convergence_is_second_order() {
        // Manufactured v* = cos(pi x) cos(pi y): zero mean by symmetry, and
        // the sampled forcing keeps the right-hand side exactly balanced on
        // grids with even cell counts.
        use std::f64::consts::PI;
        let p = healing_params();
        let exact = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
        let solve = |n: usize| {
            let grid = Grid::unit_square(n).unwrap();
            let chi = ScalarField::from_fn(grid, |x, y| {
                1.0 / grid.area()
                    + 2.0 * p.beta * PI * PI * (PI * x).cos() * (PI * y).cos()
            })
            .unwrap();
            solve_vstar(grid, &chi, &p, 1e-11).unwrap().field
        };
        let e32 = error_vs_exact(&solve(32), exact);
        let e64 = error_vs_exact(&solve(64), exact);
        let ratio = e32 / e64;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "ratio {ratio}, errors {e32} vs {e64}"
        );
    }
}
