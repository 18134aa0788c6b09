//! Prefactored Thomas solves for (I - c * Lap_h) with reflected ends.
//!
//! The matrix is strictly diagonally dominant for c >= 0 (diagonal 1 + 2a,
//! off-diagonals summing to 2a), so elimination without pivoting is stable
//! and the factorization can be reused across every step of a trajectory.

use crate::error::{CoreError, Result};
use crate::field::GridSpec;

pub(crate) struct ReflectedHelmholtz {
    n: usize,
    sup: Vec<f64>,
    /// Forward-elimination multipliers l_i and pivots d_i.
    mult: Vec<f64>,
    piv: Vec<f64>,
}

impl ReflectedHelmholtz {
    /// Factor (I - c * Lap_h) on `grid`; `c` is diffusivity * dt and must be
    /// nonnegative and finite.
    pub fn new(grid: GridSpec, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(CoreError::Config(format!(
                "implicit diffusion weight must be finite and >= 0, got {c}"
            )));
        }
        let n = grid.n_cells();
        let a = c * (n as f64) * (n as f64);
        let nn = n + 1;
        let diag = vec![1.0 + 2.0 * a; nn];
        let mut sub = vec![-a; nn]; // sub[i] multiplies x_{i-1} in row i
        let mut sup = vec![-a; nn]; // sup[i] multiplies x_{i+1} in row i
        sup[0] = -2.0 * a;
        sub[n] = -2.0 * a;

        let mut mult = vec![0.0; nn];
        let mut piv = vec![0.0; nn];
        piv[0] = diag[0];
        for i in 1..nn {
            let p_prev = piv[i - 1];
            if !p_prev.is_finite() || p_prev.abs() < f64::MIN_POSITIVE {
                return Err(CoreError::SolveBreakdown {
                    row: i - 1,
                    pivot: p_prev,
                });
            }
            mult[i] = sub[i] / p_prev;
            piv[i] = diag[i] - mult[i] * sup[i - 1];
        }
        let last = piv[n];
        if !last.is_finite() || last.abs() < f64::MIN_POSITIVE {
            return Err(CoreError::SolveBreakdown { row: n, pivot: last });
        }
        Ok(ReflectedHelmholtz { n, sup, mult, piv })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(rhs.len(), n + 1);
        for i in 1..=n {
            rhs[i] -= self.mult[i] * rhs[i - 1];
        }
        rhs[n] /= self.piv[n];
        for i in (0..n).rev() {
            rhs[i] = (rhs[i] - self.sup[i] * rhs[i + 1]) / self.piv[i];
        }
    }
}
