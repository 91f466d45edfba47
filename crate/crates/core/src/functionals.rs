//! Scalar diagnostics and analytic bounds: the total masses `U` and `V`, the
//! harm functional `Phi = eta U + gamma V`, the squared-`L²` functional
//! `Psi`, the weighted mean `xi`, the invariant trapezoid in `(U, V)` phase
//! space with its cap `V_up`, the empirical `theta` estimate, the `L²`
//! envelope `E`, and the `v*`-based pointwise-bound ingredient.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::elliptic::{solve_vstar, EllipticError};
use crate::g17;
use crate::grid::{quadrature, Grid, ScalarField};
use crate::integrator::SimState;
use crate::model::ModelParams;

/// Below this value the quadrature of `v²` counts as degenerate and `xi`
/// falls back to its upper endpoint 1, keeping the envelope conservative.
pub const XI_DEGENERATE: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FunctionalsError {
    #[error("every sample has a degenerate denominator")]
    NoValidSamples,
    #[error("the ratio never settles below 1, no onset time exists")]
    NoOnset,
}

/// One sampled row of diagnostics along a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `U = quadrature(u)`, the total amount of the first species.
    pub u_total: f64,
    /// `V = quadrature(v)`, the total amount of the second species.
    pub v_total: f64,
    /// `Phi = eta U + gamma V`.
    pub phi: f64,
    /// `Psi = quadrature(v²) / 2`.
    pub psi: f64,
    /// Weighted mean of `1 - u` with weight `v²`; 1 when `v` is degenerate.
    pub xi: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

/// Diagnostics from all samples of one run, with everything needed to
/// recompute the derived bounds from the file alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub params: ModelParams,
    pub grid: Grid,
    pub dt: f64,
    pub snapshot_every: usize,
}

impl Trajectory {
    pub fn new(params: ModelParams, grid: Grid, dt: f64, snapshot_every: usize) -> Self {
        Trajectory {
            records: Vec::new(),
            params,
            grid,
            dt,
            snapshot_every,
        }
    }

    /// Append a record; sample times must be strictly increasing.
    pub fn push(&mut self, rec: DiagnosticsRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                rec.t > last.t,
                "sample times must be strictly increasing ({} after {})",
                rec.t,
                last.t
            );
        }
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.records.last()
    }
}

/// Compute all diagnostics for one state.
pub fn compute_record(state: &SimState, params: &ModelParams) -> DiagnosticsRecord {
    let u = state.u();
    let v = state.v();
    let area = u.grid().cell_area();
    let u_total = quadrature(u);
    let v_total = quadrature(v);
    let mut v2 = 0.0;
    let mut weighted = 0.0;
    for (&uv, &vv) in u.values().iter().zip(v.values()) {
        let sq = vv * vv;
        v2 += sq;
        weighted += (1.0 - uv) * sq;
    }
    v2 *= area;
    weighted *= area;
    let xi = if v2 < XI_DEGENERATE { 1.0 } else { weighted / v2 };
    DiagnosticsRecord {
        t: state.t,
        u_total,
        v_total,
        phi: params.eta * u_total + params.gamma * v_total,
        psi: 0.5 * v2,
        xi,
        u_min: u.min(),
        u_max: u.max(),
        v_max: v.max(),
    }
}

/// Invariant trapezoid in `(U, V)` phase space: `U in [0, |Omega|]` and
/// `V <= v_up - slope * U` with `slope = eta / gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaRegion {
    pub omega_area: f64,
    /// Cap on the total of the second species:
    /// `(1/gamma)(eta + 1 + gamma delta / eta) |Omega|`.
    pub v_up: f64,
    /// Slope `eta / gamma` of the slanted edge.
    pub slope: f64,
}

pub fn sigma_region(params: &ModelParams, omega_area: f64) -> SigmaRegion {
    let v_up = (params.eta + 1.0 + params.gamma * params.delta / params.eta) / params.gamma
        * omega_area;
    SigmaRegion {
        omega_area,
        v_up,
        slope: params.eta / params.gamma,
    }
}

/// Largest amount by which `(U, V)` sticks out of the trapezoid; non-positive
/// inside.
pub fn sigma_violation(region: &SigmaRegion, u_total: f64, v_total: f64) -> f64 {
    let above_slant = v_total - (region.v_up - region.slope * u_total);
    (-u_total)
        .max(u_total - region.omega_area)
        .max(-v_total)
        .max(above_slant)
}

pub fn sigma_contains(region: &SigmaRegion, u_total: f64, v_total: f64, tol: f64) -> bool {
    sigma_violation(region, u_total, v_total) <= tol
}

/// `quadrature(u v^rho) / quadrature(v^rho)`, or `None` when the denominator
/// is degenerate.
pub fn theta_ratio(state: &SimState, rho: f64) -> Option<f64> {
    let area = state.u().grid().cell_area();
    let mut num = 0.0;
    let mut den = 0.0;
    for (&uv, &vv) in state.u().values().iter().zip(state.v().values()) {
        let w = vv.powf(rho);
        num += uv * w;
        den += w;
    }
    num *= area;
    den *= area;
    if den < XI_DEGENERATE {
        None
    } else {
        Some(num / den)
    }
}

/// Empirical bound on the mass ratio after its transient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate {
    /// Largest ratio observed from the onset time on.
    pub theta: f64,
    /// First sample time after which the ratio stays below 1.
    pub onset: f64,
    pub samples_used: usize,
}

/// Estimate `theta` from sampled ratios `(t, quadrature(u v^rho) /
/// quadrature(v^rho))`; degenerate denominators enter as `None` and are
/// skipped.
pub fn estimate_theta(samples: &[(f64, Option<f64>)]) -> Result<ThetaEstimate, FunctionalsError> {
    let valid: Vec<(f64, f64)> = samples
        .iter()
        .filter_map(|&(t, r)| r.map(|r| (t, r)))
        .collect();
    if valid.is_empty() {
        return Err(FunctionalsError::NoValidSamples);
    }
    // Onset: first valid sample after the last ratio at or above 1.
    let onset_idx = match valid.iter().rposition(|&(_, r)| r >= 1.0) {
        None => 0,
        Some(last_bad) if last_bad + 1 < valid.len() => last_bad + 1,
        Some(_) => return Err(FunctionalsError::NoOnset),
    };
    let tail = &valid[onset_idx..];
    let theta = tail.iter().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
    Ok(ThetaEstimate {
        theta,
        onset: tail[0].0,
        samples_used: tail.len(),
    })
}

/// Which constant multiplies the inflow bound inside the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeForm {
    /// `M = delta * chi_max * |Omega| * V_up`.
    #[default]
    ChiWeighted,
    /// `M = delta * |Omega| * V_up`.
    Plain,
}

pub fn envelope_constant(
    params: &ModelParams,
    omega_area: f64,
    chi_max: f64,
    form: EnvelopeForm,
) -> f64 {
    let v_up = sigma_region(params, omega_area).v_up;
    match form {
        EnvelopeForm::ChiWeighted => params.delta * chi_max * omega_area * v_up,
        EnvelopeForm::Plain => params.delta * omega_area * v_up,
    }
}

/// Envelope dominating `Psi`:
/// `E(t) = exp(-2 eta X(t)) (M int_0^t exp(2 eta X(tau)) dtau + Psi(0))`
/// with `X(t) = int_0^t xi(s) ds`.
///
/// Both time integrals use the trapezoidal rule over the recorded samples.
/// The returned values are computed by the algebraically identical
/// interval-by-interval recurrence
/// `E_{k+1} = exp(-2 eta dX) E_k + M (dt/2) (exp(-2 eta dX) + 1)`,
/// which avoids the large intermediates of the literal formula and is
/// deterministic given the samples.
pub fn envelope(traj: &Trajectory, chi_max: f64, form: EnvelopeForm) -> Vec<(f64, f64)> {
    let params = &traj.params;
    let m = envelope_constant(params, traj.grid.area(), chi_max, form);
    let mut out = Vec::with_capacity(traj.records.len());
    let Some(first) = traj.records.first() else {
        return out;
    };
    let mut e = first.psi;
    out.push((first.t, e));
    for pair in traj.records.windows(2) {
        let (r0, r1) = (&pair[0], &pair[1]);
        let dt = r1.t - r0.t;
        let dx = 0.5 * dt * (r0.xi + r1.xi);
        let decay = (-2.0 * params.eta * dx).exp();
        e = decay * e + m * 0.5 * dt * (decay + 1.0);
        out.push((r1.t, e));
    }
    out
}

/// The computable ingredients of the pointwise bound on `v`: the maximum of
/// the zero-mean stationary solution `v*` and the reportable partial bound
/// `delta |Omega| max v*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseBoundIngredients {
    pub max_vstar: f64,
    pub partial_bound: f64,
}

pub fn linf_bound_ingredients(
    grid: Grid,
    chi: &ScalarField,
    params: &ModelParams,
    tol: f64,
) -> Result<PointwiseBoundIngredients, EllipticError> {
    let sol = solve_vstar(grid, chi, params, tol)?;
    let max_vstar = sol.field.max();
    Ok(PointwiseBoundIngredients {
        max_vstar,
        partial_bound: params.delta * grid.area() * max_vstar,
    })
}

#[derive(Debug, Error)]
pub enum TrajectoryCsvError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("missing metadata key '{0}'")]
    MissingMeta(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

pub const TRAJECTORY_HEADER: &str = "t,U,V,phi,psi,xi,u_min,u_max,v_max";

/// Keys the core writer owns; anything else round-trips through `extras`.
const CORE_META_KEYS: [&str; 13] = [
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "model.alpha",
    "model.beta",
    "model.gamma",
    "model.delta",
    "model.eta",
    "model.u_min",
    "model.kappa",
    "step.dt",
    "step.snapshot_every",
];

/// A parsed trajectory file: the trajectory plus any extra metadata lines
/// (for example the portal geometry written by the simulation driver).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub trajectory: Trajectory,
    pub extras: std::collections::BTreeMap<String, String>,
}

/// Write a trajectory as CSV with a `#`-prefixed metadata block, one row per
/// sample, 17 significant digits.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: &mut W) -> io::Result<()> {
    write_trajectory_csv_with_extras(traj, &[], w)
}

/// Like [`write_trajectory_csv`] with additional metadata `key = value`
/// lines appended to the block.
pub fn write_trajectory_csv_with_extras<W: Write>(
    traj: &Trajectory,
    extras: &[(&str, String)],
    w: &mut W,
) -> io::Result<()> {
    writeln!(w, "# hepasim-trajectory v1")?;
    writeln!(w, "# grid.nx = {}", traj.grid.nx())?;
    writeln!(w, "# grid.ny = {}", traj.grid.ny())?;
    writeln!(w, "# grid.lx = {}", traj.grid.lx())?;
    writeln!(w, "# grid.ly = {}", traj.grid.ly())?;
    let p = &traj.params;
    writeln!(w, "# model.alpha = {}", p.alpha)?;
    writeln!(w, "# model.beta = {}", p.beta)?;
    writeln!(w, "# model.gamma = {}", p.gamma)?;
    writeln!(w, "# model.delta = {}", p.delta)?;
    writeln!(w, "# model.eta = {}", p.eta)?;
    writeln!(w, "# model.u_min = {}", p.u_min)?;
    writeln!(w, "# model.kappa = {}", p.kappa)?;
    writeln!(w, "# step.dt = {}", traj.dt)?;
    writeln!(w, "# step.snapshot_every = {}", traj.snapshot_every)?;
    for (key, value) in extras {
        writeln!(w, "# {key} = {value}")?;
    }
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in &traj.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            g17(r.t),
            g17(r.u_total),
            g17(r.v_total),
            g17(r.phi),
            g17(r.psi),
            g17(r.xi),
            g17(r.u_min),
            g17(r.u_max),
            g17(r.v_max)
        )?;
    }
    Ok(())
}

/// Read a trajectory written by [`write_trajectory_csv`] or
/// [`write_trajectory_csv_with_extras`].
pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<TrajectoryFile, TrajectoryCsvError> {
    let mut meta = std::collections::HashMap::new();
    let mut records = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !seen_header {
            if trimmed != TRAJECTORY_HEADER {
                return Err(TrajectoryCsvError::Malformed {
                    line: lineno + 1,
                    msg: format!("expected header '{TRAJECTORY_HEADER}', got '{trimmed}'"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| TrajectoryCsvError::Malformed {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if fields.len() != 9 {
            return Err(TrajectoryCsvError::Malformed {
                line: lineno + 1,
                msg: format!("expected 9 columns, got {}", fields.len()),
            });
        }
        records.push(DiagnosticsRecord {
            t: fields[0],
            u_total: fields[1],
            v_total: fields[2],
            phi: fields[3],
            psi: fields[4],
            xi: fields[5],
            u_min: fields[6],
            u_max: fields[7],
            v_max: fields[8],
        });
    }
    if !seen_header {
        return Err(TrajectoryCsvError::Malformed {
            line: 1,
            msg: "missing header row".into(),
        });
    }
    let get = |key: &str| -> Result<&String, TrajectoryCsvError> {
        meta.get(key)
            .ok_or_else(|| TrajectoryCsvError::MissingMeta(key.into()))
    };
    let parse_f = |key: &str| -> Result<f64, TrajectoryCsvError> {
        get(key)?
            .parse::<f64>()
            .map_err(|e| TrajectoryCsvError::Malformed {
                line: 0,
                msg: format!("metadata {key}: {e}"),
            })
    };
    let parse_u = |key: &str| -> Result<usize, TrajectoryCsvError> {
        get(key)?
            .parse::<usize>()
            .map_err(|e| TrajectoryCsvError::Malformed {
                line: 0,
                msg: format!("metadata {key}: {e}"),
            })
    };
    let grid = Grid::new(
        parse_u("grid.nx")?,
        parse_u("grid.ny")?,
        parse_f("grid.lx")?,
        parse_f("grid.ly")?,
    )?;
    let params = ModelParams {
        alpha: parse_f("model.alpha")?,
        beta: parse_f("model.beta")?,
        gamma: parse_f("model.gamma")?,
        delta: parse_f("model.delta")?,
        eta: parse_f("model.eta")?,
        u_min: parse_f("model.u_min")?,
        kappa: parse_f("model.kappa")?,
    };
    params.validate()?;
    let mut traj = Trajectory::new(
        params,
        grid,
        parse_f("step.dt")?,
        parse_u("step.snapshot_every")?,
    );
    for rec in records {
        traj.push(rec);
    }
    let extras = meta
        .into_iter()
        .filter(|(k, _)| !CORE_META_KEYS.contains(&k.as_str()))
        .collect();
    Ok(TrajectoryFile {
        trajectory: traj,
        extras,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::SimState;

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

    fn chronic_params() -> ModelParams {
        ModelParams {
            delta: 0.7,
            eta: 0.9,
            ..healing_params()
        }
    }

    fn state(grid: Grid, u0: f64, v0: f64) -> SimState {
        SimState::new(
            0.0,
            ScalarField::constant(grid, u0).unwrap(),
            ScalarField::constant(grid, v0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn record_for_unit_u_zero_v() {
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        let rec = compute_record(&state(grid, 1.0, 0.0), &p);
        assert_eq!(rec.u_total, 1.0);
        assert_eq!(rec.v_total, 0.0);
        assert!((rec.phi - p.eta).abs() <= 1e-15);
        assert_eq!(rec.psi, 0.0);
        assert_eq!(rec.xi, 1.0);
        assert_eq!(rec.u_min, 1.0);
        assert_eq!(rec.u_max, 1.0);
        assert_eq!(rec.v_max, 0.0);
    }

    #[test]
    fn xi_is_constant_weight() {
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        // u = 0, v = 1: weight (1 - u) = 1 everywhere.
        let rec = compute_record(&state(grid, 0.0, 1.0), &p);
        assert!((rec.xi - 1.0).abs() <= 1e-12);
        // u = 1/2: weight 1/2 everywhere.
        let rec = compute_record(&state(grid, 0.5, 1.0), &p);
        assert!((rec.xi - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn vup_healing_and_chronic_values() {
        let healing = sigma_region(&healing_params(), 1.0);
        assert!((healing.v_up - 19.833333333333332).abs() <= 1e-12);
        let chronic = sigma_region(&chronic_params(), 1.0);
        assert!((chronic.v_up - 26.0 / 9.0).abs() <= 1e-12);
        // Linear in the domain area.
        let scaled = sigma_region(&healing_params(), 2.5);
        assert!((scaled.v_up - 2.5 * healing.v_up).abs() <= 1e-12);
    }

    #[test]
    fn sigma_containment_edges() {
        let p = healing_params();
        let region = sigma_region(&p, 1.0);
        assert!(sigma_contains(&region, 0.0, 0.0, 0.0));
        // The top-right corner (|Omega|, v_up) lies above the slanted edge.
        let slant_gap = region.slope * region.omega_area;
        assert!(!sigma_contains(&region, 1.0, region.v_up, 0.5 * slant_gap));
        assert!(sigma_contains(&region, 1.0, region.v_up - slant_gap, 1e-12));
        assert!(!sigma_contains(&region, -0.1, 0.0, 1e-9));
        assert!(!sigma_contains(&region, 1.1, 0.0, 1e-9));
    }

    #[test]
    fn theta_ratio_cases() {
        let grid = Grid::unit_square(8).unwrap();
        // Zero u: ratio 0 for any admissible v.
        let s = state(grid, 0.0, 2.0);
        assert_eq!(theta_ratio(&s, 2.0), Some(0.0));
        // Constant u factors out of the ratio.
        let s = state(grid, 0.37, 1.5);
        let r = theta_ratio(&s, 2.0).unwrap();
        assert!((r - 0.37).abs() <= 1e-12);
        // Degenerate denominator.
        let s = state(grid, 0.5, 0.0);
        assert_eq!(theta_ratio(&s, 2.0), None);
    }

    #[test]
    fn theta_estimate_onset_and_errors() {
        let samples = vec![
            (0.0, None),
            (1.0, Some(1.0)),
            (2.0, Some(0.8)),
            (3.0, Some(0.6)),
            (4.0, Some(0.7)),
        ];
        let est = estimate_theta(&samples).unwrap();
        assert_eq!(est.onset, 2.0);
        assert_eq!(est.theta, 0.8);
        assert_eq!(est.samples_used, 3);

        assert!(matches!(
            estimate_theta(&[(0.0, None), (1.0, None)]),
            Err(FunctionalsError::NoValidSamples)
        ));
        assert!(matches!(
            estimate_theta(&[(0.0, Some(0.5)), (1.0, Some(1.2))]),
            Err(FunctionalsError::NoOnset)
        ));
        // All ratios already below 1: onset is the first valid sample.
        let est = estimate_theta(&[(0.0, Some(0.3)), (1.0, Some(0.2))]).unwrap();
        assert_eq!(est.onset, 0.0);
        assert_eq!(est.theta, 0.3);
    }

    fn synthetic_trajectory(xi: f64, psi0: f64, n: usize, dt: f64) -> Trajectory {
        let p = healing_params();
        let grid = Grid::unit_square(16).unwrap();
        let mut traj = Trajectory::new(p, grid, dt, 1);
        for k in 0..=n {
            traj.push(DiagnosticsRecord {
                t: k as f64 * dt,
                u_total: 0.0,
                v_total: 0.0,
                phi: 0.0,
                psi: psi0,
                xi,
                u_min: 0.0,
                u_max: 0.0,
                v_max: 0.0,
            });
        }
        traj
    }

    #[test]
    fn envelope_matches_closed_form_for_constant_xi() {
        // xi = 1, Psi(0) = 0: E(t) = (M / 2 eta)(1 - exp(-2 eta t)).
        let traj = synthetic_trajectory(1.0, 0.0, 2000, 0.005);
        let p = traj.params;
        let chi_max = 31.0;
        let m = envelope_constant(&p, 1.0, chi_max, EnvelopeForm::ChiWeighted);
        let env = envelope(&traj, chi_max, EnvelopeForm::ChiWeighted);
        assert_eq!(env[0], (0.0, 0.0));
        for &(t, e) in &env {
            let exact = m / (2.0 * p.eta) * (1.0 - (-2.0 * p.eta * t).exp());
            assert!(
                (e - exact).abs() <= 1e-4 * exact.max(1.0),
                "t = {t}: {e} vs {exact}"
            );
        }
    }

    #[test]
    fn envelope_starts_at_initial_psi() {
        let traj = synthetic_trajectory(0.7, 3.25, 10, 0.1);
        let env = envelope(&traj, 10.0, EnvelopeForm::Plain);
        assert_eq!(env[0], (0.0, 3.25));
    }

    #[test]
    fn envelope_constant_forms() {
        let p = healing_params();
        let v_up = sigma_region(&p, 1.0).v_up;
        let chi_max = 12.0;
        let with = envelope_constant(&p, 1.0, chi_max, EnvelopeForm::ChiWeighted);
        let plain = envelope_constant(&p, 1.0, chi_max, EnvelopeForm::Plain);
        assert!((with - p.delta * chi_max * v_up).abs() <= 1e-12 * with);
        assert!((plain - p.delta * v_up).abs() <= 1e-12 * plain);
    }

    #[test]
    fn pointwise_bound_whole_domain_portal_is_zero() {
        let grid = Grid::unit_square(16).unwrap();
        let p = healing_params();
        let chi = ScalarField::constant(grid, 1.0 / grid.area()).unwrap();
        let ing = linf_bound_ingredients(grid, &chi, &p, 1e-12).unwrap();
        assert!(ing.max_vstar.abs() <= 1e-12);
        assert!(ing.partial_bound.abs() <= 1e-11);
    }

    #[test]
    fn pointwise_bound_scales_with_delta() {
        let grid = Grid::unit_square(32).unwrap();
        let portal =
            crate::grid::build_chi(grid, &crate::grid::PortalSpec::new((1.0, 1.0), 0.2)).unwrap();
        let p = healing_params();
        let base = linf_bound_ingredients(grid, portal.chi(), &p, 1e-10).unwrap();
        assert!(base.max_vstar > 0.0);
        let mut p2 = p;
        p2.delta *= 3.0;
        let tripled = linf_bound_ingredients(grid, portal.chi(), &p2, 1e-10).unwrap();
        assert!(
            (tripled.partial_bound - 3.0 * base.partial_bound).abs()
                <= 1e-9 * base.partial_bound.abs().max(1.0)
        );
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let mut traj = synthetic_trajectory(0.9, 1.5, 5, 0.25);
        traj.records[3].xi = 0.123456789012345678;
        let mut buf = Vec::new();
        write_trajectory_csv_with_extras(&traj, &[("portal.radius", "0.2".into())], &mut buf)
            .unwrap();
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(traj, back.trajectory);
        assert_eq!(back.extras.get("portal.radius").map(String::as_str), Some("0.2"));
    }

    #[test]
    fn trajectory_csv_rejects_garbage() {
        assert!(read_trajectory_csv("not,a,trajectory\n1,2,3\n".as_bytes()).is_err());
        assert!(read_trajectory_csv("".as_bytes()).is_err());
    }

    #[test]
    #[should_panic(expected = "strictly increasing")]
    fn trajectory_rejects_non_monotone_times() {
        let mut traj = synthetic_trajectory(1.0, 0.0, 2, 1.0);
        let mut rec = traj.records[0];
        rec.t = 0.5;
        traj.push(rec);
    }
}
