//! Scenario configuration: the two named presets, a flat `key = value`
//! config format with dotted section prefixes, and helpers to materialize a
//! configured scenario into grid, portal, and initial state.
//!
//! Every key has a default taken from the healing preset, so a config file
//! only needs the keys it changes. Files written by [`write_config`] carry
//! every key and parse back to an identical configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::{build_chi, Grid, GridError, Portal, PortalSpec, ScalarField};
use crate::integrator::{IntegratorError, SimState, StepControl};
use crate::model::{ModelError, ModelParams};
use crate::verify::CheckKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown preset '{0}' (available: healing, chronic)")]
    UnknownPreset(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {msg}")]
    BadValue { key: String, msg: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrator(#[from] Box<IntegratorError>),
}

/// Initial data: constants or a pair of field-snapshot files.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Constant { u0: f64, v0: f64 },
    Files { u: PathBuf, v: PathBuf },
}

/// Which checks the report should carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckSelection {
    All,
    Subset(Vec<CheckKind>),
}

impl CheckSelection {
    pub fn kinds(&self) -> Vec<CheckKind> {
        match self {
            CheckSelection::All => CheckKind::ALL.to_vec(),
            CheckSelection::Subset(kinds) => kinds.clone(),
        }
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub portal_center: (f64, f64),
    pub portal_radius: f64,
    pub model: ModelParams,
    pub step: StepControl,
    pub init: InitSpec,
    /// Times at which full field snapshots are written.
    pub field_times: Vec<f64>,
    pub out_dir: PathBuf,
    pub checks: CheckSelection,
}

/// The named parameter sets. `healing` drives both populations to zero by
/// `t = 10`; `chronic` (weaker inflow, faster decay) settles into a
/// non-zero inhomogeneous state by `t = 30`.
pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let healing = ScenarioConfig {
        nx: 64,
        ny: 64,
        lx: 1.0,
        ly: 1.0,
        portal_center: (1.0, 1.0),
        portal_radius: 0.2,
        model: ModelParams {
            alpha: 0.6,
            beta: 0.3,
            gamma: 0.9,
            delta: 3.7,
            eta: 0.2,
            u_min: 0.05,
            kappa: 0.01,
        },
        step: StepControl {
            dt: 1e-3,
            t_final: 10.0,
            snapshot_every: 10,
        },
        init: InitSpec::Constant { u0: 1.0, v0: 0.0 },
        field_times: vec![0.0, 0.75, 3.0, 10.0],
        out_dir: PathBuf::from("out"),
        checks: CheckSelection::All,
    };
    match name {
        "healing" => Ok(healing),
        "chronic" => Ok(ScenarioConfig {
            model: ModelParams {
                delta: 0.7,
                eta: 0.9,
                ..healing.model
            },
            step: StepControl {
                t_final: 30.0,
                ..healing.step
            },
            field_times: vec![0.0, 10.5, 30.0],
            ..healing
        }),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Ok(Grid::new(self.nx, self.ny, self.lx, self.ly)?)
    }

    pub fn portal_spec(&self) -> PortalSpec {
        PortalSpec::new(self.portal_center, self.portal_radius)
    }

    pub fn portal(&self) -> Result<Portal, ConfigError> {
        Ok(build_chi(self.grid()?, &self.portal_spec())?)
    }

    /// Build the initial state, reading snapshot files if configured.
    pub fn initial_state(&self) -> Result<SimState, ConfigError> {
        let grid = self.grid()?;
        let (u, v) = match &self.init {
            InitSpec::Constant { u0, v0 } => (
                ScalarField::constant(grid, *u0)?,
                ScalarField::constant(grid, *v0)?,
            ),
            InitSpec::Files { u, v } => (read_field(grid, u)?, read_field(grid, v)?),
        };
        SimState::new(0.0, u, v).map_err(|e| ConfigError::Integrator(Box::new(e)))
    }

    /// Validate everything that does not require running: grid, portal,
    /// parameters, step control, and referenced files.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        build_chi(grid, &self.portal_spec())?;
        self.model.validate()?;
        self.step
            .validate()
            .map_err(|e| ConfigError::Integrator(Box::new(e)))?;
        if let InitSpec::Files { u, v } = &self.init {
            for path in [u, v] {
                if !path.exists() {
                    return Err(ConfigError::MissingFile(path.clone()));
                }
            }
        }
        Ok(())
    }
}

fn read_field(grid: Grid, path: &Path) -> Result<ScalarField, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::MissingFile(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    crate::grid::read_field_csv(grid, std::io::BufReader::new(file)).map_err(|e| {
        ConfigError::BadValue {
            key: path.display().to_string(),
            msg: e.to_string(),
        }
    })
}

/// Apply one `key = value` pair onto a config.
pub fn apply_kv(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    let bad = |msg: String| ConfigError::BadValue {
        key: key.to_string(),
        msg,
    };
    let parse_f64 = |value: &str| -> Result<f64, ConfigError> {
        value.parse::<f64>().map_err(|e| bad(e.to_string()))
    };
    let parse_usize = |value: &str| -> Result<usize, ConfigError> {
        value.parse::<usize>().map_err(|e| bad(e.to_string()))
    };
    match key {
        "grid.nx" => cfg.nx = parse_usize(value)?,
        "grid.ny" => cfg.ny = parse_usize(value)?,
        "grid.lx" => cfg.lx = parse_f64(value)?,
        "grid.ly" => cfg.ly = parse_f64(value)?,
        "portal.cx" => cfg.portal_center.0 = parse_f64(value)?,
        "portal.cy" => cfg.portal_center.1 = parse_f64(value)?,
        "portal.radius" => cfg.portal_radius = parse_f64(value)?,
        "model.alpha" => cfg.model.alpha = parse_f64(value)?,
        "model.beta" => cfg.model.beta = parse_f64(value)?,
        "model.gamma" => cfg.model.gamma = parse_f64(value)?,
        "model.delta" => cfg.model.delta = parse_f64(value)?,
        "model.eta" => cfg.model.eta = parse_f64(value)?,
        "model.u_min" => cfg.model.u_min = parse_f64(value)?,
        "model.kappa" => cfg.model.kappa = parse_f64(value)?,
        "step.dt" => cfg.step.dt = parse_f64(value)?,
        "step.t_final" => cfg.step.t_final = parse_f64(value)?,
        "step.snapshot_every" => cfg.step.snapshot_every = parse_usize(value)?,
        "init.u0" => {
            let u0 = parse_f64(value)?;
            cfg.init = match &cfg.init {
                InitSpec::Constant { v0, .. } => InitSpec::Constant { u0, v0: *v0 },
                InitSpec::Files { .. } => InitSpec::Constant { u0, v0: 0.0 },
            };
        }
        "init.v0" => {
            let v0 = parse_f64(value)?;
            cfg.init = match &cfg.init {
                InitSpec::Constant { u0, .. } => InitSpec::Constant { u0: *u0, v0 },
                InitSpec::Files { .. } => InitSpec::Constant { u0: 1.0, v0 },
            };
        }
        "init.u_file" => {
            let u = PathBuf::from(value);
            cfg.init = match &cfg.init {
                InitSpec::Files { v, .. } => InitSpec::Files { u, v: v.clone() },
                InitSpec::Constant { .. } => InitSpec::Files {
                    u,
                    v: PathBuf::new(),
                },
            };
        }
        "init.v_file" => {
            let v = PathBuf::from(value);
            cfg.init = match &cfg.init {
                InitSpec::Files { u, .. } => InitSpec::Files { u: u.clone(), v },
                InitSpec::Constant { .. } => InitSpec::Files {
                    u: PathBuf::new(),
                    v,
                },
            };
        }
        "output.dir" => cfg.out_dir = PathBuf::from(value),
        "output.fields_at" => {
            cfg.field_times = if value.trim().is_empty() {
                Vec::new()
            } else {
                value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<_, _>>()?
            };
        }
        "checks" => {
            cfg.checks = if value.trim() == "all" {
                CheckSelection::All
            } else {
                let kinds = value
                    .split(',')
                    .map(|s| {
                        CheckKind::from_name(s.trim())
                            .ok_or_else(|| bad(format!("unknown check '{}'", s.trim())))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                CheckSelection::Subset(kinds)
            };
        }
        other => return Err(ConfigError::UnknownKey(other.to_string())),
    }
    Ok(())
}

/// Parse the flat `key = value` format over the healing-preset defaults.
/// `#` starts a comment, blank lines are ignored.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = preset("healing").expect("healing preset exists");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: lineno + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        apply_kv(&mut cfg, key.trim(), value.trim()).map_err(|e| match e {
            ConfigError::UnknownKey(k) => ConfigError::Parse {
                line: lineno + 1,
                msg: format!("unknown key '{k}'"),
            },
            other => other,
        })?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Render a config with every key present; parsing the result reproduces
/// the config exactly.
pub fn write_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "grid.nx = {}", cfg.nx);
    let _ = writeln!(s, "grid.ny = {}", cfg.ny);
    let _ = writeln!(s, "grid.lx = {}", cfg.lx);
    let _ = writeln!(s, "grid.ly = {}", cfg.ly);
    let _ = writeln!(s, "portal.cx = {}", cfg.portal_center.0);
    let _ = writeln!(s, "portal.cy = {}", cfg.portal_center.1);
    let _ = writeln!(s, "portal.radius = {}", cfg.portal_radius);
    let _ = writeln!(s, "model.alpha = {}", cfg.model.alpha);
    let _ = writeln!(s, "model.beta = {}", cfg.model.beta);
    let _ = writeln!(s, "model.gamma = {}", cfg.model.gamma);
    let _ = writeln!(s, "model.delta = {}", cfg.model.delta);
    let _ = writeln!(s, "model.eta = {}", cfg.model.eta);
    let _ = writeln!(s, "model.u_min = {}", cfg.model.u_min);
    let _ = writeln!(s, "model.kappa = {}", cfg.model.kappa);
    let _ = writeln!(s, "step.dt = {}", cfg.step.dt);
    let _ = writeln!(s, "step.t_final = {}", cfg.step.t_final);
    let _ = writeln!(s, "step.snapshot_every = {}", cfg.step.snapshot_every);
    match &cfg.init {
        InitSpec::Constant { u0, v0 } => {
            let _ = writeln!(s, "init.u0 = {u0}");
            let _ = writeln!(s, "init.v0 = {v0}");
        }
        InitSpec::Files { u, v } => {
            let _ = writeln!(s, "init.u_file = {}", u.display());
            let _ = writeln!(s, "init.v_file = {}", v.display());
        }
    }
    let _ = writeln!(s, "output.dir = {}", cfg.out_dir.display());
    let times: Vec<String> = cfg.field_times.iter().map(|t| t.to_string()).collect();
    let _ = writeln!(s, "output.fields_at = {}", times.join(","));
    let checks = match &cfg.checks {
        CheckSelection::All => "all".to_string(),
        CheckSelection::Subset(kinds) => kinds
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(","),
    };
    let _ = writeln!(s, "checks = {checks}");
    s
}
