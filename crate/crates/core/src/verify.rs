//! Machine-checkable assertions over simulation output: pointwise bounds,
//! the mass cap, trapezoid containment, the `L²` envelope, the discrete
//! growth inequality for `Psi`, and the healing/chronic course classifier.
//!
//! Checks consume the sampled diagnostics plus per-snapshot field extrema
//! rather than full fields: every bound in the list only needs extrema, and
//! plain extrema records can be tampered with in tests to prove each check
//! detects its violation.

use std::fmt;

use thiserror::Error;

use crate::functionals::{
    envelope, envelope_constant, sigma_region, sigma_violation, EnvelopeForm, Trajectory,
};
use crate::g17;
use crate::integrator::SimState;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("snapshot at t = {t} does not match any trajectory sample")]
    InconsistentInputs { t: f64 },
    #[error("trajectory has no samples")]
    EmptyTrajectory,
}

/// Pointwise extrema of one sampled state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotExtrema {
    pub t: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl From<&SimState> for SnapshotExtrema {
    fn from(state: &SimState) -> Self {
        SnapshotExtrema {
            t: state.t,
            u_min: state.u().min(),
            u_max: state.u().max(),
            v_min: state.v().min(),
            v_max: state.v().max(),
        }
    }
}

/// Absolute and relative slacks granted to each check; the bounds are
/// analytic, so violations beyond roundoff scale indicate real failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Pointwise non-negativity slack for `u` and `v`.
    pub tol_neg: f64,
    /// Pointwise slack above 1 for `u`.
    pub tol_one: f64,
    /// Absolute slack on `U <= |Omega|`.
    pub tol_mass: f64,
    /// Absolute slack on trapezoid containment.
    pub tol_sigma: f64,
    /// Relative slack on `Psi <= E`, scaled by `max(1, E)`.
    pub tol_envelope_rel: f64,
    /// Relative slack on the discrete `Psi` growth inequality, scaled by
    /// `max(1, M)`.
    pub tol_psi_rate_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_neg: 1e-10,
            tol_one: 1e-10,
            tol_mass: 1e-8,
            tol_sigma: 1e-8,
            tol_envelope_rel: 1e-8,
            tol_psi_rate_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    NonNegativity,
    UCapacity,
    MassBound,
    PhaseTrapezoid,
    L2Envelope,
    L2GrowthRate,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::NonNegativity,
        CheckKind::UCapacity,
        CheckKind::MassBound,
        CheckKind::PhaseTrapezoid,
        CheckKind::L2Envelope,
        CheckKind::L2GrowthRate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::NonNegativity => "non-negativity",
            CheckKind::UCapacity => "u-capacity",
            CheckKind::MassBound => "mass-bound",
            CheckKind::PhaseTrapezoid => "phase-trapezoid",
            CheckKind::L2Envelope => "l2-envelope",
            CheckKind::L2GrowthRate => "l2-growth-rate",
        }
    }

    pub fn from_name(name: &str) -> Option<CheckKind> {
        CheckKind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckStatus::Pass => write!(f, "pass"),
            CheckStatus::Fail => write!(f, "fail"),
            CheckStatus::Skipped => write!(f, "skipped"),
        }
    }
}

/// Outcome of one check. `worst_margin` is the largest raw violation over
/// all samples (non-positive when the bound held everywhere) and
/// `worst_time` is when it occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckEntry {
    pub kind: CheckKind,
    pub status: CheckStatus,
    pub worst_margin: f64,
    pub worst_time: f64,
}

/// Pass/fail record for every enabled check, one entry each.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub entries: Vec<CheckEntry>,
}

impl BoundsReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.status != CheckStatus::Fail)
    }

    pub fn entry(&self, kind: CheckKind) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    /// Keep only the named checks, in their canonical order.
    pub fn filtered(&self, enabled: &[CheckKind]) -> BoundsReport {
        BoundsReport {
            entries: self
                .entries
                .iter()
                .filter(|e| enabled.contains(&e.kind))
                .copied()
                .collect(),
        }
    }

    /// One check per line: name, status, margin, time of the worst margin.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} worst_margin={} t={}\n",
                e.kind.name(),
                e.status,
                g17(e.worst_margin),
                g17(e.worst_time)
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,status,worst_margin,worst_time\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.kind.name(),
                e.status,
                g17(e.worst_margin),
                g17(e.worst_time)
            ));
        }
        out
    }
}

/// Track the worst (largest) violation and where it happened.
struct Worst {
    margin: f64,
    t: f64,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::NEG_INFINITY,
            t: 0.0,
        }
    }

    fn observe(&mut self, margin: f64, t: f64) {
        if margin > self.margin {
            self.margin = margin;
            self.t = t;
        }
    }

    fn entry(self, kind: CheckKind, tol: f64) -> CheckEntry {
        CheckEntry {
            kind,
            status: if self.margin <= tol {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            worst_margin: self.margin,
            worst_time: self.t,
        }
    }
}

/// Evaluate every check against one run's trajectory and snapshot extrema.
///
/// Snapshot times must coincide with trajectory sample times. The capacity
/// check is skipped when the initial data already exceeds 1, and the
/// snapshot-dependent part of the non-negativity check is skipped when no
/// snapshots are supplied.
pub fn check_trajectory(
    traj: &Trajectory,
    snapshots: &[SnapshotExtrema],
    chi_max: f64,
    form: EnvelopeForm,
    tol: &Tolerances,
) -> Result<BoundsReport, VerifyError> {
    let records = &traj.records;
    if records.is_empty() {
        return Err(VerifyError::EmptyTrajectory);
    }
    for s in snapshots {
        let matched = records
            .iter()
            .any(|r| (r.t - s.t).abs() <= 1e-9 * s.t.abs().max(1.0));
        if !matched {
            return Err(VerifyError::InconsistentInputs { t: s.t });
        }
    }

    let params = &traj.params;
    let omega = traj.grid.area();
    let region = sigma_region(params, omega);
    let mut entries = Vec::with_capacity(CheckKind::ALL.len());

    // Non-negativity: u extrema come with every record, v needs snapshots.
    let mut worst = Worst::new();
    for r in records {
        worst.observe(-r.u_min, r.t);
    }
    for s in snapshots {
        worst.observe(-s.u_min, s.t);
        worst.observe(-s.v_min, s.t);
    }
    entries.push(worst.entry(CheckKind::NonNegativity, tol.tol_neg));

    // Capacity: u <= 1, applicable only when the initial data respects it.
    if records[0].u_max <= 1.0 + tol.tol_one {
        let mut worst = Worst::new();
        for r in records {
            worst.observe(r.u_max - 1.0, r.t);
        }
        for s in snapshots {
            worst.observe(s.u_max - 1.0, s.t);
        }
        entries.push(worst.entry(CheckKind::UCapacity, tol.tol_one));
    } else {
        entries.push(CheckEntry {
            kind: CheckKind::UCapacity,
            status: CheckStatus::Skipped,
            worst_margin: records[0].u_max - 1.0,
            worst_time: records[0].t,
        });
    }

    // Total mass of u stays below the domain area.
    let mut worst = Worst::new();
    for r in records {
        worst.observe(r.u_total - omega, r.t);
    }
    entries.push(worst.entry(CheckKind::MassBound, tol.tol_mass));

    // Trapezoid containment of (U, V).
    let mut worst = Worst::new();
    for r in records {
        worst.observe(sigma_violation(&region, r.u_total, r.v_total), r.t);
    }
    entries.push(worst.entry(CheckKind::PhaseTrapezoid, tol.tol_sigma));

    // Psi stays below its envelope, with a slack scaled per sample.
    let env = envelope(traj, chi_max, form);
    let mut worst = Worst::new();
    let mut failed = false;
    for (r, &(_, e)) in records.iter().zip(&env) {
        let margin = r.psi - e;
        worst.observe(margin, r.t);
        if margin > tol.tol_envelope_rel * e.max(1.0) {
            failed = true;
        }
    }
    entries.push(CheckEntry {
        kind: CheckKind::L2Envelope,
        status: if failed {
            CheckStatus::Fail
        } else {
            CheckStatus::Pass
        },
        worst_margin: worst.margin,
        worst_time: worst.t,
    });

    // Discrete growth inequality: forward differences of Psi stay below
    // M - 2 eta xi Psi.
    let m = envelope_constant(params, omega, chi_max, form);
    let mut worst = Worst::new();
    for pair in records.windows(2) {
        let (r0, r1) = (&pair[0], &pair[1]);
        let rate = (r1.psi - r0.psi) / (r1.t - r0.t);
        let bound = m - 2.0 * params.eta * r0.xi * r0.psi;
        worst.observe(rate - bound, r0.t);
    }
    if records.len() < 2 {
        entries.push(CheckEntry {
            kind: CheckKind::L2GrowthRate,
            status: CheckStatus::Skipped,
            worst_margin: 0.0,
            worst_time: records[0].t,
        });
    } else {
        entries.push(worst.entry(CheckKind::L2GrowthRate, tol.tol_psi_rate_rel * m.max(1.0)));
    }

    Ok(BoundsReport { entries })
}

/// Qualitative outcome of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Course {
    Healing,
    Chronic,
    Undecided,
}

impl fmt::Display for Course {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Course::Healing => write!(f, "healing"),
            Course::Chronic => write!(f, "chronic"),
            Course::Undecided => write!(f, "undecided"),
        }
    }
}

/// Thresholds separating the courses; the model only distinguishes them
/// qualitatively, so these are reporting choices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyThresholds {
    /// A run heals when the final `U` falls below `eps_heal * |Omega|`.
    pub eps_heal: f64,
    /// Fraction of the run length forming the stationarity window.
    pub window_frac: f64,
    /// Relative change of `(U, V)` over the window accepted as stationary.
    pub rel_change: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            eps_heal: 0.01,
            window_frac: 0.1,
            rel_change: 1e-3,
        }
    }
}

/// Relative change of `(U, V)` against the final record over the trailing
/// window of the run.
pub fn stationarity_rel_change(traj: &Trajectory, window_frac: f64) -> Option<f64> {
    let records = &traj.records;
    let last = records.last()?;
    let t0 = records.first()?.t;
    let window_start = last.t - window_frac * (last.t - t0);
    let mut rel: f64 = 0.0;
    let mut seen = 0;
    for r in records.iter().filter(|r| r.t >= window_start) {
        let du = (r.u_total - last.u_total).abs() / last.u_total.abs().max(1e-30);
        let dv = (r.v_total - last.v_total).abs() / last.v_total.abs().max(1e-30);
        rel = rel.max(du.max(dv));
        seen += 1;
    }
    if seen < 2 {
        None
    } else {
        Some(rel)
    }
}

/// Classify a finished run: healing when the final mass is negligible,
/// chronic when it persists and `(U, V)` has gone stationary, undecided
/// otherwise.
pub fn classify_course(traj: &Trajectory, thresholds: &ClassifyThresholds) -> Course {
    let Some(last) = traj.records.last() else {
        return Course::Undecided;
    };
    let omega = traj.grid.area();
    if last.u_total < thresholds.eps_heal * omega {
        return Course::Healing;
    }
    match stationarity_rel_change(traj, thresholds.window_frac) {
        Some(rel) if rel < thresholds.rel_change => Course::Chronic,
        _ => Course::Undecided,
    }
}
