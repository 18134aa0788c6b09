//! Scalar functionals used to monitor trajectories: the Lyapunov functional
//! and its energy part, the admissible-constant check behind it, positivity
//! reports, pathwise moment functionals, and an empirical Holder seminorm of
//! the deviation from the free heat evolution.

use serde::{Deserialize, Serialize};

use crate::conversion::EffectiveParams;
use crate::dynamics::{ModelParams, State};
use crate::error::{CoreError, Result};
use crate::field::{trapezoid, Field, Norm};
use crate::integrator::Trajectory;
use crate::spectral::apply_heat_semigroup;

/// Coefficients of the Lyapunov functional
/// W(u, v) = int(u log u - rho u v) + c1 |grad v|_L2^2 + c2 |v|_L2^2.
/// Omitted fields deserialize to the defaults below.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovParams {
    pub rho: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        LyapunovParams {
            rho: 5.0,
            c1: 3.0,
            c2: 1.0,
        }
    }
}

impl LyapunovParams {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("rho", self.rho), ("c1", self.c1), ("c2", self.c2)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(CoreError::Config(format!(
                    "lyapunov.{name} must be positive and finite, got {x}"
                )));
            }
        }
        Ok(())
    }
}

/// Entropy integral int u log u dx with the conventions 0 log 0 = 0 and
/// entries in [-tol_pos, 0] clamped to 0 inside the integrand. Entries below
/// -tol_pos are genuine positivity loss and error out with the worst value
/// and its location.
pub fn entropy(u: &Field, tol_pos: f64) -> Result<f64> {
    let g = u.grid();
    let min = u.min_value();
    if min < -tol_pos {
        let j = u
            .values()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        return Err(CoreError::NegativeDensity {
            min,
            location: g.node(j),
        });
    }
    Ok(trapezoid(g, |j| {
        let x = u.values()[j];
        if x <= 0.0 {
            0.0
        } else {
            x * x.ln()
        }
    }))
}

/// The full Lyapunov functional. The cross term uses the raw density; only
/// the entropy integrand clamps.
pub fn lyapunov_w(state: &State, lp: &LyapunovParams, tol_pos: f64) -> Result<f64> {
    let ent = entropy(&state.u, tol_pos)?;
    let cross = trapezoid(state.u.grid(), |j| {
        -lp.rho * state.u.values()[j] * state.v.values()[j]
    });
    let gv = state.v.h1_seminorm();
    let nv = state.v.l2();
    Ok(ent + cross + lp.c1 * gv * gv + lp.c2 * nv * nv)
}

/// The cross-term-free part of W; an upper bound for W on non-negative data.
pub fn energy_e(state: &State, lp: &LyapunovParams, tol_pos: f64) -> Result<f64> {
    let ent = entropy(&state.u, tol_pos)?;
    let gv = state.v.h1_seminorm();
    let nv = state.v.l2();
    Ok(ent + lp.c1 * gv * gv + lp.c2 * nv * nv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintVerdict {
    Pass,
    Fail,
    /// The inequalities presuppose beta > 0 and r_v > 0.
    Inapplicable,
}

/// Outcome of the admissibility inequalities linking the Lyapunov
/// coefficients to the model: c1 > (r_u + r_v)/(beta r_v) and
/// rho > (chi + c1 beta)/(c1 beta r_v - r_v - r_u), both strict.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConstraintReport {
    pub verdict: ConstraintVerdict,
    pub c1_lower_bound: Option<f64>,
    pub c1_margin: Option<f64>,
    /// c1 beta r_v - r_v - r_u; positive iff the c1 inequality holds.
    pub coupling_denominator: Option<f64>,
    pub rho_lower_bound: Option<f64>,
    pub rho_margin: Option<f64>,
}

pub fn validate_constants(lp: &LyapunovParams, mp: &ModelParams) -> ConstraintReport {
    if mp.beta == 0.0 || mp.r_v == 0.0 {
        return ConstraintReport {
            verdict: ConstraintVerdict::Inapplicable,
            c1_lower_bound: None,
            c1_margin: None,
            coupling_denominator: None,
            rho_lower_bound: None,
            rho_margin: None,
        };
    }
    let c1_bound = (mp.r_u + mp.r_v) / (mp.beta * mp.r_v);
    let c1_margin = lp.c1 - c1_bound;
    let denom = lp.c1 * mp.beta * mp.r_v - mp.r_v - mp.r_u;
    if denom <= 0.0 {
        return ConstraintReport {
            verdict: ConstraintVerdict::Fail,
            c1_lower_bound: Some(c1_bound),
            c1_margin: Some(c1_margin),
            coupling_denominator: Some(denom),
            rho_lower_bound: None,
            rho_margin: None,
        };
    }
    let rho_bound = (mp.chi + lp.c1 * mp.beta) / denom;
    let rho_margin = lp.rho - rho_bound;
    ConstraintReport {
        verdict: if c1_margin > 0.0 && rho_margin > 0.0 {
            ConstraintVerdict::Pass
        } else {
            ConstraintVerdict::Fail
        },
        c1_lower_bound: Some(c1_bound),
        c1_margin: Some(c1_margin),
        coupling_denominator: Some(denom),
        rho_lower_bound: Some(rho_bound),
        rho_margin: Some(rho_margin),
    }
}

/// Pointwise sign diagnostics of a single state or a whole trajectory.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PositivityReport {
    pub min_u: f64,
    pub min_v: f64,
    /// Fraction of nodes (single state) or recorded steps (trajectory) where
    /// u falls below -tol_pos.
    pub violating_fraction: f64,
    pub first_violation_time: Option<f64>,
}

pub fn positivity_report(state: &State, tol_pos: f64) -> PositivityReport {
    let n = state.u.values().len();
    let bad = state
        .u
        .values()
        .iter()
        .filter(|&&x| x < -tol_pos)
        .count();
    PositivityReport {
        min_u: state.u.min_value(),
        min_v: state.v.min_value(),
        violating_fraction: bad as f64 / n as f64,
        first_violation_time: None,
    }
}

pub fn positivity_over_trajectory(traj: &Trajectory, tol_pos: f64) -> PositivityReport {
    let mut min_u = f64::INFINITY;
    let mut min_v = f64::INFINITY;
    let mut bad = 0usize;
    let mut first = None;
    for row in &traj.scalars {
        min_u = min_u.min(row.min_u);
        min_v = min_v.min(row.min_v);
        if row.min_u < -tol_pos {
            bad += 1;
            if first.is_none() {
                first = Some(row.t);
            }
        }
    }
    PositivityReport {
        min_u,
        min_v,
        violating_fraction: bad as f64 / traj.scalars.len() as f64,
        first_violation_time: first,
    }
}

/// Pathwise realizations of the moment functionals: running sups are taken
/// over the recorded step grid (a lower bound for the continuous-time sup),
/// the integral term is the trapezoid-free running sum the integrator keeps.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PathFunctionals {
    pub sup_l1_u: f64,
    pub sup_gradv_l2_sq: f64,
    pub int_gradv_h1_sq: f64,
    /// sup_l1_u raised to the requested moment order.
    pub sup_l1_u_pow_p: f64,
    pub p: f64,
    /// Sup over recorded steps where W is defined; NaN if it never is.
    pub sup_lyapunov_w: f64,
}

pub fn moment_functionals(traj: &Trajectory, p: f64) -> Result<PathFunctionals> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(CoreError::Config(format!(
            "moment order must be >= 1, got {p}"
        )));
    }
    if traj.scalars.is_empty() {
        return Err(CoreError::Invalid("trajectory has no recorded rows".into()));
    }
    let mut sup_l1 = 0.0f64;
    let mut sup_g2 = 0.0f64;
    let mut sup_w = f64::NAN;
    for row in &traj.scalars {
        sup_l1 = sup_l1.max(row.l1_u);
        sup_g2 = sup_g2.max(row.gradv_l2 * row.gradv_l2);
        if row.lyapunov_w.is_finite() {
            sup_w = if sup_w.is_nan() {
                row.lyapunov_w
            } else {
                sup_w.max(row.lyapunov_w)
            };
        }
    }
    let int = traj
        .scalars
        .last()
        .map(|r| r.gradv_h1_integral)
        .unwrap_or(0.0);
    Ok(PathFunctionals {
        sup_l1_u: sup_l1,
        sup_gradv_l2_sq: sup_g2,
        int_gradv_h1_sq: int,
        sup_l1_u_pow_p: sup_l1.powf(p),
        p,
        sup_lyapunov_w: sup_w,
    })
}

/// Empirical Holder seminorm of z(t) = u(t) - e^{t(r_u Lap + gamma_u)} u(0)
/// in the H^s cosine norm: max over recorded snapshot pairs of
/// |z(t2) - z(t1)|_{H^s} / (t2 - t1)^holder_exponent.
pub fn holder_seminorm(
    traj: &Trajectory,
    model: &ModelParams,
    eff: &EffectiveParams,
    holder_exponent: f64,
    sobolev_exponent: f64,
) -> Result<f64> {
    let snaps = traj.snapshot_series();
    if snaps.len() < 2 {
        return Err(CoreError::Invalid(format!(
            "holder seminorm needs at least 2 snapshots, got {}",
            snaps.len()
        )));
    }
    let (t0, first) = (snaps[0].0, &snaps[0].1.u);
    let mut zs: Vec<(f64, Field)> = Vec::with_capacity(snaps.len());
    for (t, st) in &snaps {
        let free = apply_heat_semigroup(first, t - t0, model.r_u, eff.gamma_u)?;
        let mut z = st.u.clone();
        z.add_scaled(&free, -1.0);
        zs.push((*t, z));
    }
    let mut best = 0.0f64;
    for i in 0..zs.len() {
        for j in i + 1..zs.len() {
            let gap = zs[j].0 - zs[i].0;
            if gap <= 0.0 {
                continue;
            }
            let mut d = zs[j].1.clone();
            d.add_scaled(&zs[i].1, -1.0);
            let dist = d.norm(Norm::Sobolev {
                exponent: sobolev_exponent,
            })?;
            best = best.max(dist / gap.powf(holder_exponent));
        }
    }
    Ok(best)
}
