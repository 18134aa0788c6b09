//! Right-hand sides of the coupled cell-density / chemical-signal system.
//!
//! Ito form on [0, 1] with reflecting (Neumann) boundaries:
//!
//!   du = [ r_u Lap u - chi div(u grad v) + gamma_u u ] dt + u dW1
//!   dv = [ r_v Lap v - alpha_eff v + beta u ]         dt + v dW2
//!
//! where gamma_u and alpha_eff already absorb the Stratonovich corrections
//! (see the conversion module). The steppers split these drifts into a stiff
//! diffusion part handled implicitly or spectrally and the remaining explicit
//! part provided here.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::{chemotactic_divergence, neumann_laplacian, Field};

/// Deterministic model coefficients (before any noise-induced corrections).
/// Omitted fields deserialize to the defaults below.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Cell diffusivity r_u > 0.
    pub r_u: f64,
    /// Signal diffusivity r_v > 0.
    pub r_v: f64,
    /// Chemotactic sensitivity chi >= 0.
    pub chi: f64,
    /// Signal decay rate alpha >= 0 (pre-correction).
    pub alpha: f64,
    /// Signal production rate beta >= 0.
    pub beta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            r_u: 1.0,
            r_v: 1.0,
            chi: 1.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("r_u", self.r_u),
            ("r_v", self.r_v),
            ("chi", self.chi),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(CoreError::Config(format!("{name} must be finite, got {v}")));
            }
        }
        if self.r_u <= 0.0 || self.r_v <= 0.0 {
            return Err(CoreError::Config(format!(
                "diffusivities must be positive, got r_u = {}, r_v = {}",
                self.r_u, self.r_v
            )));
        }
        if self.chi < 0.0 || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(CoreError::Config(
                "chi, alpha, beta must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// The pair of unknown fields at one time.
#[derive(Clone, Debug)]
pub struct State {
    pub u: Field,
    pub v: Field,
}

impl State {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(CoreError::Invalid(
                "state components must share one grid".into(),
            ));
        }
        Ok(State { u, v })
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Explicit (non-diffusive) drift of the cell equation:
/// `- attenuation * chi * div(u grad v) + gamma_u * u`.
///
/// The attenuation factor scales only the chemotactic transport; truncation
/// control uses it to fade the nonlinearity out near a stopping threshold.
/// At `attenuation = 1.0` the product is exact, so an always-open cutoff
/// leaves the floating-point stream untouched.
pub fn drift_u_explicit(
    u: &Field,
    v: &Field,
    chi: f64,
    gamma_u: f64,
    attenuation: f64,
) -> Field {
    let mut out = chemotactic_divergence(u, v, -chi * attenuation);
    for (o, &ui) in out.values_mut().iter_mut().zip(u.values()) {
        *o += gamma_u * ui;
    }
    out
}

/// Explicit drift of the signal equation: `- alpha_eff * v + beta * u`.
pub fn drift_v_explicit(u: &Field, v: &Field, alpha_eff: f64, beta: f64) -> Field {
    let values = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&ui, &vi)| beta * ui - alpha_eff * vi)
        .collect();
    Field::from_values(u.grid(), values).expect("length matches grid")
}

/// Full drift of the cell equation including diffusion (reference form used
/// by fully explicit schemes and by tests that cross-check the splitting).
pub fn drift_u_full(
    u: &Field,
    v: &Field,
    r_u: f64,
    chi: f64,
    gamma_u: f64,
    attenuation: f64,
) -> Field {
    let mut out = neumann_laplacian(u, r_u);
    out.add_scaled(&drift_u_explicit(u, v, chi, gamma_u, attenuation), 1.0);
    out
}

/// Full drift of the signal equation including diffusion.
pub fn drift_v_full(u: &Field, v: &Field, r_v: f64, alpha_eff: f64, beta: f64) -> Field {
    let mut out = neumann_laplacian(v, r_v);
    out.add_scaled(&drift_v_explicit(u, v, alpha_eff, beta), 1.0);
    out
}

/// Multiplicative noise action: the pointwise product field * increment.
pub fn diffusion_action(field: &Field, increment: &Field) -> Field {
    let values = field
        .values()
        .iter()
        .zip(increment.values())
        .map(|(&f, &w)| f * w)
        .collect();
    Field::from_values(field.grid(), values).expect("length matches grid")
}
