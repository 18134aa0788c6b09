//! Cosine-series view of a field and the exact heat propagator.
//!
//! cos(m pi x) satisfies the zero-flux condition at both ends, and nodal
//! samples at x_j = j/n admit an exact interpolating expansion
//! f_j = sum_m a_m cos(m pi x_j) (a type-I discrete cosine transform).
//! Diffusion-plus-reaction semigroups act diagonally on the coefficients,
//! which makes propagation spectrally exact for every band the grid resolves.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

use crate::error::{CoreError, Result};
use crate::field::{Field, GridSpec};

/// Dense DCT-I plan for one grid size. Built once, shared via [`plan`].
pub struct CosineTransform {
    grid: GridSpec,
    /// table[m * (n+1) + j] = cos(pi m j / n)
    table: Vec<f64>,
}

impl CosineTransform {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n_cells();
        let nn = n + 1;
        let mut table = vec![0.0; nn * nn];
        for m in 0..nn {
            for j in 0..nn {
                table[m * nn + j] = (std::f64::consts::PI * (m * j) as f64 / n as f64).cos();
            }
        }
        CosineTransform { grid, table }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Interpolating coefficients: f_j = sum_m coeffs[m] cos(m pi x_j) exactly.
    pub fn forward(&self, f: &Field) -> SpectralField {
        assert_eq!(f.grid(), self.grid, "transform grid mismatch");
        let mut coeffs = vec![0.0; self.grid.n_nodes()];
        self.forward_into(f.values(), &mut coeffs);
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn inverse(&self, s: &SpectralField) -> Field {
        assert_eq!(s.grid, self.grid, "transform grid mismatch");
        let mut values = vec![0.0; self.grid.n_nodes()];
        self.inverse_into(&s.coeffs, &mut values);
        Field::from_values(self.grid, values).expect("length matches grid")
    }

    pub(crate) fn forward_into(&self, values: &[f64], coeffs: &mut [f64]) {
        let n = self.grid.n_cells();
        let nn = n + 1;
        for m in 0..nn {
            let row = &self.table[m * nn..(m + 1) * nn];
            let mut acc = 0.5 * (values[0] * row[0] + values[n] * row[n]);
            for j in 1..n {
                acc += values[j] * row[j];
            }
            // Discrete orthogonality: the half-weighted self-product is n/2
            // for interior modes and n for m in {0, n}.
            let denom = if m == 0 || m == n {
                n as f64
            } else {
                n as f64 / 2.0
            };
            coeffs[m] = acc / denom;
        }
    }

    pub(crate) fn inverse_into(&self, coeffs: &[f64], values: &mut [f64]) {
        let n = self.grid.n_cells();
        let nn = n + 1;
        values.fill(0.0);
        for m in 0..nn {
            let c = coeffs[m];
            if c == 0.0 {
                continue;
            }
            let row = &self.table[m * nn..(m + 1) * nn];
            for j in 0..nn {
                values[j] += c * row[j];
            }
        }
    }
}

/// A field in interpolating cosine coefficients: f(x) = sum coeffs[m] cos(m pi x).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }
}

static PLANS: Lazy<Mutex<HashMap<usize, Arc<CosineTransform>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared transform plan for a grid; plans are cached per grid size.
pub fn plan(grid: GridSpec) -> Arc<CosineTransform> {
    let mut cache = PLANS.lock().expect("plan cache poisoned");
    cache
        .entry(grid.n_cells())
        .or_insert_with(|| Arc::new(CosineTransform::new(grid)))
        .clone()
}

/// Apply exp(t * (diffusivity * Lap + zeroth_order)) spectrally.
///
/// Mode m is scaled by exp(t (zeroth_order - diffusivity (m pi)^2)); this is
/// the exact propagator of the linear problem on the resolved band. Negative
/// times are rejected (the semigroup is not invertible numerically).
pub fn apply_heat_semigroup(
    f: &Field,
    t: f64,
    diffusivity: f64,
    zeroth_order: f64,
) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(CoreError::Invalid(format!(
            "semigroup time must be >= 0, got {t}"
        )));
    }
    let plan = plan(f.grid());
    let mut s = plan.forward(f);
    for (m, c) in s.coeffs.iter_mut().enumerate() {
        let freq = m as f64 * std::f64::consts::PI;
        *c *= (t * (zeroth_order - diffusivity * freq * freq)).exp();
    }
    Ok(plan.inverse(&s))
}

/// Sobolev norm with shifted spectral weights.
///
/// Coefficients are rescaled to the orthonormal basis (cos(m pi x) has L2
/// norm 1/sqrt(2) for m >= 1) and weighted by (1 + (m pi)^2)^exponent; at
/// exponent 0 this reproduces the L2 norm of the interpolant.
pub(crate) fn sobolev_norm(f: &Field, exponent: f64) -> f64 {
    let plan = plan(f.grid());
    let s = plan.forward(f);
    let mut total = 0.0;
    for (m, &c) in s.coeffs.iter().enumerate() {
        let ortho_sq = if m == 0 { c * c } else { 0.5 * c * c };
        let freq = m as f64 * std::f64::consts::PI;
        total += ortho_sq * (1.0 + freq * freq).powf(exponent);
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Norm;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn round_trip_is_tight() {
        let g = grid(96);
        let f = Field::from_fn(g, |x| (3.1 * x).sin() + 0.25 * (17.0 * x).cos() + x * x);
        let plan = CosineTransform::new(g);
        let back = plan.inverse(&plan.forward(&f));
        let scale = f.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12 * scale, "round trip drift {a} vs {b}");
        }
    }

    #[test]
    fn pure_mode_has_single_coefficient() {
        let g = grid(32);
        let f = Field::from_fn(g, |x| (5.0 * std::f64::consts::PI * x).cos());
        let s = CosineTransform::new(g).forward(&f);
        for (m, &c) in s.coeffs.iter().enumerate() {
            let expect = if m == 5 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(c, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn semigroup_eigen_decay() {
        let g = grid(128);
        let f = Field::from_fn(g, |x| (std::f64::consts::PI * x).cos());
        let out = apply_heat_semigroup(&f, 0.1, 1.0, 0.0).unwrap();
        let decay = (-std::f64::consts::PI.powi(2) * 0.1).exp();
        for j in 0..=128 {
            let expect = decay * (std::f64::consts::PI * g.node(j)).cos();
            assert_abs_diff_eq!(out.values()[j], expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn semigroup_rejects_negative_time() {
        let f = Field::constant(grid(8), 1.0);
        assert!(apply_heat_semigroup(&f, -0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn semigroup_zeroth_order_growth_on_constants() {
        let f = Field::constant(grid(8), 2.0);
        let out = apply_heat_semigroup(&f, 0.3, 1.0, 0.7).unwrap();
        for &v in out.values() {
            assert_abs_diff_eq!(v, 2.0 * (0.3_f64 * 0.7).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sobolev_zero_exponent_matches_l2() {
        let g = grid(64);
        let f = Field::from_fn(g, |x| (2.0 * std::f64::consts::PI * x).cos());
        let s = f.norm(Norm::Sobolev { exponent: 0.0 }).unwrap();
        assert_abs_diff_eq!(s, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(s, f.l2(), epsilon = 1e-10);
    }

    #[test]
    fn sobolev_weights_grow_with_mode() {
        let g = grid(64);
        let lo = Field::from_fn(g, |x| (std::f64::consts::PI * x).cos());
        let hi = Field::from_fn(g, |x| (8.0 * std::f64::consts::PI * x).cos());
        let k = 0.7;
        let nlo = lo.norm(Norm::Sobolev { exponent: k }).unwrap();
        let nhi = hi.norm(Norm::Sobolev { exponent: k }).unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let expected = ((1.0 + 64.0 * pi2) / (1.0 + pi2)).powf(k / 2.0);
        assert_abs_diff_eq!(nhi / nlo, expected, epsilon = 1e-10);
    }
}
