//! First-order IMEX time stepping for the coupled system: reaction and
//! non-local inflow explicit, diffusion implicit.
//!
//! The implicit half is unconditionally stable; the explicit half is run
//! under a conservative step bound built from the current reaction rates.
//! With that bound the scheme preserves non-negativity and the invariant
//! `u <= 1` exactly (the implicit operator is an M-matrix whose inverse
//! fixes constants), so any negative values past solver roundoff indicate a
//! scheme failure and are reported instead of repaired.

use thiserror::Error;

use crate::elliptic::{cg, default_max_iters, CgScratch, HelmholtzOp};
use crate::functionals::{compute_record, DiagnosticsRecord, Trajectory};
use crate::grid::{quad_slice, Grid, GridError, ScalarField};
use crate::model::{growth_rate_raw, ModelParams};

/// Negative values of magnitude at most this are treated as solver roundoff
/// and clipped to zero; anything larger is an invariant violation.
pub const NEG_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    U,
    V,
}

impl std::fmt::Display for Species {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Species::U => write!(f, "u"),
            Species::V => write!(f, "v"),
        }
    }
}

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("state fields live on different grids")]
    GridMismatch,
    #[error("initial {species} has a negative value {min:e}")]
    NegativeInitial { species: Species, min: f64 },
    #[error("dt = {dt} exceeds the explicit stability bound {dt_max} at t = {t}")]
    StabilityViolation { dt: f64, dt_max: f64, t: f64 },
    #[error(
        "implicit diffusion solve for {species} failed at t = {t}: residual {residual:e} after {iterations} iterations (tol {tol:e})"
    )]
    NoConvergence {
        species: Species,
        t: f64,
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("{species} fell to {min:e} at t = {t}, beyond the roundoff clip")]
    NegativityViolation { species: Species, min: f64, t: f64 },
    #[error("{species} became non-finite at t = {t}")]
    NonFinite { species: Species, t: f64 },
    #[error("invalid step control: {0}")]
    BadControl(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The evolving solution pair at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    u: ScalarField,
    v: ScalarField,
}

impl SimState {
    /// Both fields must share a grid and be non-negative up to [`NEG_CLIP`].
    pub fn new(t: f64, u: ScalarField, v: ScalarField) -> Result<Self, IntegratorError> {
        if u.grid() != v.grid() {
            return Err(IntegratorError::GridMismatch);
        }
        for (field, species) in [(&u, Species::U), (&v, Species::V)] {
            let min = field.min();
            if min < -NEG_CLIP {
                return Err(IntegratorError::NegativeInitial { species, min });
            }
        }
        Ok(SimState { t, u, v })
    }

    /// Constant initial data, the default being `u = 1`, `v = 0`.
    pub fn constant(grid: Grid, u0: f64, v0: f64) -> Result<Self, IntegratorError> {
        Ok(SimState::new(
            0.0,
            ScalarField::constant(grid, u0)?,
            ScalarField::constant(grid, v0)?,
        )?)
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn v(&self) -> &ScalarField {
        &self.v
    }

    pub fn grid(&self) -> Grid {
        self.u.grid()
    }
}

/// Time-step size, horizon, and diagnostic cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    pub t_final: f64,
    /// Record diagnostics every this many steps.
    pub snapshot_every: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt: 1e-3,
            t_final: 10.0,
            snapshot_every: 10,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegratorError::BadControl(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(IntegratorError::BadControl(format!(
                "t_final must be non-negative and finite, got {}",
                self.t_final
            )));
        }
        if self.snapshot_every == 0 {
            return Err(IntegratorError::BadControl(
                "snapshot_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps to reach (or just pass) `t_final`.
    pub fn step_count(&self) -> usize {
        if self.t_final <= 0.0 {
            return 0;
        }
        let ratio = self.t_final / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() < 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

/// Largest explicitly stable step for the current state:
/// `0.5 / (|w|_max + gamma v_max + eta + delta chi_max |Omega|)`.
pub fn dt_max(state: &SimState, params: &ModelParams, chi: &ScalarField) -> f64 {
    dt_max_raw(
        state.u.values(),
        state.v.values(),
        params,
        chi.max(),
        state.grid().area(),
    )
}

fn dt_max_raw(u: &[f64], v: &[f64], params: &ModelParams, chi_max: f64, omega_area: f64) -> f64 {
    let mut w_max = 0.0f64;
    for &uv in u {
        w_max = w_max.max(growth_rate_raw(uv, params).abs());
    }
    let v_cap = v.iter().copied().fold(0.0f64, f64::max);
    0.5 / (w_max + params.gamma * v_cap + params.eta + params.delta * chi_max * omega_area)
}

struct StepWorkspace {
    u_star: Vec<f64>,
    v_star: Vec<f64>,
    cg: CgScratch,
}

impl StepWorkspace {
    fn new(n: usize) -> Self {
        StepWorkspace {
            u_star: vec![0.0; n],
            v_star: vec![0.0; n],
            cg: CgScratch::default(),
        }
    }
}

fn clip_nonneg(values: &mut [f64], species: Species, t: f64) -> Result<(), IntegratorError> {
    for val in values.iter_mut() {
        if !val.is_finite() {
            return Err(IntegratorError::NonFinite { species, t });
        }
        if *val < 0.0 {
            if *val >= -NEG_CLIP {
                *val = 0.0;
            } else {
                return Err(IntegratorError::NegativityViolation {
                    species,
                    min: *val,
                    t,
                });
            }
        }
    }
    Ok(())
}

/// One IMEX step over the raw buffers: explicit reaction into the star
/// stage, then one Helmholtz solve `(I - dt c lap)` per species.
#[allow(clippy::too_many_arguments)]
fn advance(
    u: &mut [f64],
    v: &mut [f64],
    grid: Grid,
    params: &ModelParams,
    chi: &[f64],
    chi_max: f64,
    dt: f64,
    t: f64,
    ws: &mut StepWorkspace,
) -> Result<(), IntegratorError> {
    let bound = dt_max_raw(u, v, params, chi_max, grid.area());
    if dt > bound {
        return Err(IntegratorError::StabilityViolation {
            dt,
            dt_max: bound,
            t,
        });
    }

    let total_u = quad_slice(u, grid.cell_area());
    let inflow_scale = params.delta * total_u;
    for k in 0..u.len() {
        let (uk, vk) = (u[k], v[k]);
        ws.u_star[k] = uk + dt * (uk * growth_rate_raw(uk, params) - params.gamma * uk * vk);
        ws.v_star[k] = vk + dt * (inflow_scale * chi[k] - params.eta * (1.0 - uk) * vk);
    }

    let max_iters = default_max_iters(&grid);
    for (species, coeff, star, target) in [
        (Species::U, params.alpha, &ws.u_star, &mut *u),
        (Species::V, params.beta, &ws.v_star, &mut *v),
    ] {
        let op = HelmholtzOp {
            grid,
            mass: 1.0,
            diffusion: dt * coeff,
        };
        let rhs_max = star.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = 1e-12 * rhs_max.max(1.0);
        // Warm start from the star stage; diffusion changes it only mildly.
        target.copy_from_slice(star);
        let out = cg(&op, star, target, tol, max_iters, false, &mut ws.cg);
        if !out.converged {
            return Err(IntegratorError::NoConvergence {
                species,
                t,
                iterations: out.iterations,
                residual: out.residual_norm,
                tol,
            });
        }
    }

    clip_nonneg(u, Species::U, t)?;
    clip_nonneg(v, Species::V, t)?;
    Ok(())
}

/// One IMEX step. `state` must satisfy its invariants and `dt` the explicit
/// stability bound.
pub fn step(
    state: &SimState,
    params: &ModelParams,
    chi: &ScalarField,
    ctrl: &StepControl,
) -> Result<SimState, IntegratorError> {
    params.validate()?;
    ctrl.validate()?;
    if state.grid() != chi.grid() {
        return Err(IntegratorError::GridMismatch);
    }
    let grid = state.grid();
    let mut u = state.u.values().to_vec();
    let mut v = state.v.values().to_vec();
    let mut ws = StepWorkspace::new(grid.cell_count());
    advance(
        &mut u,
        &mut v,
        grid,
        params,
        chi.values(),
        chi.max(),
        ctrl.dt,
        state.t,
        &mut ws,
    )?;
    SimState::new(
        state.t + ctrl.dt,
        ScalarField::from_values(grid, u)?,
        ScalarField::from_values(grid, v)?,
    )
}

/// Advance from `initial` until `t >= t_final`, recording diagnostics at the
/// configured cadence (plus the initial and final states) and handing each
/// sampled state to `sink`.
pub fn run<F>(
    initial: SimState,
    params: &ModelParams,
    chi: &ScalarField,
    ctrl: &StepControl,
    mut sink: F,
) -> Result<Trajectory, IntegratorError>
where
    F: FnMut(&SimState, &DiagnosticsRecord),
{
    params.validate()?;
    ctrl.validate()?;
    if initial.grid() != chi.grid() {
        return Err(IntegratorError::GridMismatch);
    }
    let grid = initial.grid();
    let t0 = initial.t;
    let n_steps = ctrl.step_count();

    let mut traj = Trajectory::new(*params, grid, ctrl.dt, ctrl.snapshot_every);
    let rec = compute_record(&initial, params);
    traj.push(rec);
    sink(&initial, &rec);

    let mut u = initial.u.values().to_vec();
    let mut v = initial.v.values().to_vec();
    let chi_vals = chi.values();
    let chi_max = chi.max();
    let mut ws = StepWorkspace::new(grid.cell_count());

    for k in 1..=n_steps {
        let t = t0 + (k - 1) as f64 * ctrl.dt;
        advance(
            &mut u, &mut v, grid, params, chi_vals, chi_max, ctrl.dt, t, &mut ws,
        )?;
        if k % ctrl.snapshot_every == 0 || k == n_steps {
            let state = SimState::new(
                t0 + k as f64 * ctrl.dt,
                ScalarField::from_values(grid, u.clone())?,
                ScalarField::from_values(grid, v.clone())?,
            )?;
            let rec = compute_record(&state, params);
            traj.push(rec);
            sink(&state, &rec);
        }
    }
    Ok(traj)
}
