//! Reaction terms of the two-species system: Allee-type growth for `u`,
//! predation and decay couplings, and the non-local portal inflow for `v`.

use thiserror::Error;

use crate::grid::{quadrature, ScalarField};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("growth rate evaluated at or below the pole u = -kappa (u = {u})")]
    PoleInput { u: f64 },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
}

/// All scalar coefficients of the coupled system.
///
/// `alpha`, `beta` are the diffusion coefficients of `u` and `v`; `gamma` is
/// the predation rate; `delta` scales the portal inflow; `eta` is the decay
/// rate of `v`; `u_min` is the Allee threshold and `kappa` the growth-shape
/// parameter. All must be strictly positive with `0 < u_min < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub u_min: f64,
    pub kappa: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let named = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("eta", self.eta),
            ("u_min", self.u_min),
            ("kappa", self.kappa),
        ];
        for (name, value) in named {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParams(format!(
                    "{name} must be strictly positive and finite, got {value}"
                )));
            }
        }
        if self.u_min >= 1.0 {
            return Err(ModelError::InvalidParams(format!(
                "u_min must lie in (0, 1), got {}",
                self.u_min
            )));
        }
        Ok(())
    }
}

/// Growth rate `w(u) = (1 - u)(u - u_min) / (u + kappa)`.
///
/// `w` vanishes at `u_min` and at 1, is positive between those zeros, and
/// takes its minimum over `[0, 1]` at `w(0) = -u_min / kappa`.
pub fn growth_rate(u: f64, params: &ModelParams) -> Result<f64, ModelError> {
    if !u.is_finite() || u <= -params.kappa {
        return Err(ModelError::PoleInput { u });
    }
    Ok(growth_rate_raw(u, params))
}

/// `w(u)` without the pole check; callers must guarantee `u > -kappa`.
#[inline]
pub(crate) fn growth_rate_raw(u: f64, params: &ModelParams) -> f64 {
    (1.0 - u) * (u - params.u_min) / (u + params.kappa)
}

/// Inflow field `j[u] = delta * U * chi` where `U = quadrature(u)`.
///
/// Because `chi` integrates to 1, the total inflow is `delta * U`.
pub fn inflow_field(u: &ScalarField, chi: &ScalarField, params: &ModelParams) -> ScalarField {
    assert_eq!(u.grid(), chi.grid(), "fields must share a grid");
    let total_u = quadrature(u);
    let values = chi.values().iter().map(|&c| params.delta * total_u * c).collect();
    ScalarField::from_values_unchecked(u.grid(), values)
}

/// Reaction term of the `u` equation: `u w(u) - gamma u v`, pointwise at
/// cell centers.
pub fn reaction_u(u: &ScalarField, v: &ScalarField, params: &ModelParams) -> ScalarField {
    assert_eq!(u.grid(), v.grid(), "fields must share a grid");
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&uv, &vv)| uv * growth_rate_raw(uv, params) - params.gamma * uv * vv)
        .collect();
    ScalarField::from_values_unchecked(u.grid(), values)
}

/// Reaction term of the `v` equation: `j[u] - eta (1 - u) v`, pointwise at
/// cell centers.
pub fn reaction_v(
    u: &ScalarField,
    v: &ScalarField,
    chi: &ScalarField,
    params: &ModelParams,
) -> ScalarField {
    assert_eq!(u.grid(), v.grid(), "fields must share a grid");
    assert_eq!(u.grid(), chi.grid(), "fields must share a grid");
    let total_u = quadrature(u);
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .zip(chi.values())
        .map(|((&uv, &vv), &cv)| {
            params.delta * total_u * cv - params.eta * (1.0 - uv) * vv
        })
        .collect();
    ScalarField::from_values_unchecked(u.grid(), values)
}
