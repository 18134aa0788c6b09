//! Nodal scalar fields on [0, 1] with reflecting (zero-flux) ends.
//!
//! A field is its samples at the n+1 uniform nodes x_j = j/n. Quadrature is
//! the trapezoid rule throughout, so "mass" always means the trapezoid
//! integral. The difference operators below are the discrete counterparts
//! used by the time steppers; both the diffusive and the advective flux sums
//! telescope, so mass is conserved exactly (up to rounding), which several
//! tests pin down.

use crate::error::{CoreError, Result};
use crate::spectral;

/// Uniform grid on the unit interval: `n_cells` cells, `n_cells + 1` nodes.
///
/// Only the cell count is stored; spacing and node positions are derived, so
/// the geometry cannot drift. The right endpoint is exact: node(n) == 1.0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n_cells: usize,
}

impl GridSpec {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 4 {
            return Err(CoreError::Config(format!(
                "grid needs at least 4 cells, got {n_cells}"
            )));
        }
        Ok(GridSpec { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.n_cells as f64
    }
}

/// Norms and norm-like functionals on a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    /// Trapezoid integral of |f|.
    L1,
    /// Square root of the trapezoid integral of f^2.
    L2,
    /// L2 norm of the finite-difference gradient.
    H1Seminorm,
    /// Spectral Sobolev norm: sum of squared orthonormal cosine coefficients
    /// weighted by (1 + (m pi)^2)^exponent.
    Sobolev { exponent: f64 },
    /// Orlicz-type functional: integral of f*log(2 + f). Requires f >= 0 up
    /// to `floor_tol`; entries in [-floor_tol, 0] are read as 0.
    LLogL { floor_tol: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|j| f(grid.node(j))).collect();
        Field { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(CoreError::Invalid(format!(
                "field needs {} nodal values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Trapezoid integral (signed).
    pub fn mass(&self) -> f64 {
        trapezoid(self.grid, |j| self.values[j])
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Field, scale: f64) {
        assert_eq!(self.grid, other.grid, "field grids must match");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.values {
            *a *= factor;
        }
    }

    pub fn norm(&self, kind: Norm) -> Result<f64> {
        match kind {
            Norm::L1 => Ok(trapezoid(self.grid, |j| self.values[j].abs())),
            Norm::L2 => Ok(trapezoid(self.grid, |j| self.values[j] * self.values[j]).sqrt()),
            Norm::H1Seminorm => gradient(self).norm(Norm::L2),
            Norm::Sobolev { exponent } => Ok(spectral::sobolev_norm(self, exponent)),
            Norm::LLogL { floor_tol } => {
                let min = self.min_value();
                if min < -floor_tol {
                    let j = self
                        .values
                        .iter()
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(j, _)| j)
                        .unwrap_or(0);
                    return Err(CoreError::NegativeDensity {
                        min,
                        location: self.grid.node(j),
                    });
                }
                Ok(trapezoid(self.grid, |j| {
                    let f = self.values[j].max(0.0);
                    f * (2.0 + f).ln()
                }))
            }
        }
    }

    pub fn l1(&self) -> f64 {
        self.norm(Norm::L1).expect("L1 is total")
    }

    pub fn l2(&self) -> f64 {
        self.norm(Norm::L2).expect("L2 is total")
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.norm(Norm::H1Seminorm).expect("H1 seminorm is total")
    }
}

/// Trapezoid quadrature of a nodal function: end nodes carry half weight.
pub fn trapezoid(grid: GridSpec, f: impl Fn(usize) -> f64) -> f64 {
    let n = grid.n_cells();
    let mut sum = 0.5 * (f(0) + f(n));
    for j in 1..n {
        sum += f(j);
    }
    sum * grid.spacing()
}

/// Second difference with reflected ghost nodes (f_{-1} = f_1, f_{n+1} = f_{n-1}),
/// scaled by `coeff`. Row sums against trapezoid weights telescope to zero,
/// so the operator is exactly mass-neutral.
pub fn neumann_laplacian(f: &Field, coeff: f64) -> Field {
    let grid = f.grid();
    let n = grid.n_cells();
    let inv_h2 = coeff * (n as f64) * (n as f64);
    let v = f.values();
    let mut out = vec![0.0; n + 1];
    out[0] = 2.0 * (v[1] - v[0]) * inv_h2;
    for j in 1..n {
        out[j] = (v[j - 1] - 2.0 * v[j] + v[j + 1]) * inv_h2;
    }
    out[n] = 2.0 * (v[n - 1] - v[n]) * inv_h2;
    Field { grid, values: out }
}

/// Central difference in the interior, one-sided second-order stencils at the
/// ends. Exact for quadratics at every node.
pub fn gradient(f: &Field) -> Field {
    let grid = f.grid();
    let n = grid.n_cells();
    let inv_2h = 0.5 * n as f64;
    let v = f.values();
    let mut out = vec![0.0; n + 1];
    // second-order one-sided stencils, grouped as differences so constants
    // cancel exactly
    out[0] = (3.0 * (v[1] - v[0]) - (v[2] - v[1])) * inv_2h;
    for j in 1..n {
        out[j] = (v[j + 1] - v[j - 1]) * inv_2h;
    }
    out[n] = (3.0 * (v[n] - v[n - 1]) - (v[n - 1] - v[n - 2])) * inv_2h;
    Field { grid, values: out }
}

/// Conservative discretization of chi * d/dx (u dv/dx): midpoint fluxes
/// F_{j+1/2} = (u_j + u_{j+1})/2 * (v_{j+1} - v_j)/h with zero flux through
/// the ends. Boundary nodes own half cells, which makes the trapezoid-weighted
/// divergence sum vanish identically and reduces the stencil to
/// chi * c * laplacian(v) when u is the constant c.
pub fn chemotactic_divergence(u: &Field, v: &Field, chi: f64) -> Field {
    let grid = u.grid();
    assert_eq!(grid, v.grid(), "field grids must match");
    let n = grid.n_cells();
    let inv_h = n as f64;
    let uv = u.values();
    let vv = v.values();
    // flux[j] = F_{j+1/2}, j = 0..n-1
    let mut flux = vec![0.0; n];
    for j in 0..n {
        flux[j] = 0.5 * (uv[j] + uv[j + 1]) * (vv[j + 1] - vv[j]) * inv_h;
    }
    let mut out = vec![0.0; n + 1];
    out[0] = chi * 2.0 * flux[0] * inv_h;
    for j in 1..n {
        out[j] = chi * (flux[j] - flux[j - 1]) * inv_h;
    }
    out[n] = chi * 2.0 * (-flux[n - 1]) * inv_h;
    Field { grid, values: out }
}
