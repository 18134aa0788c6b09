//! Time stepping: semi-implicit and exponential Euler-Maruyama schemes for
//! the Ito-form system, plus a smoothed-noise midpoint integrator used as the
//! Stratonovich reference.
//!
//! Both SDE schemes treat the stiff diffusion implicitly or spectrally and
//! everything else explicitly, so the time step is accuracy-limited, not
//! CFL-limited. The semi-implicit scheme advances by solving for the
//! increment: (I - dt r Lap) delta = dt (r Lap x + explicit drift) + noise,
//! then x += delta. This is algebraically the textbook linearly-implicit
//! update, but a constant steady state produces an exactly zero right-hand
//! side and hence an exactly zero increment, so fixed points and conserved
//! quantities survive long runs at the bit level.
//!
//! The exponential scheme diagonalizes the linear part in the cosine basis
//! and applies the variation-of-constants weight phi1(z) = (e^z - 1)/z to
//! deterministic sources, which makes constant-forcing problems exact in
//! time; the noise term rides the full semigroup factor e^z.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::conversion::EffectiveParams;
use crate::diagnostics::{energy_e, lyapunov_w, LyapunovParams};
use crate::dynamics::{diffusion_action, drift_u_explicit, drift_v_explicit, ModelParams, State};
use crate::error::{CoreError, Result};
use crate::field::{neumann_laplacian, Field};
use crate::spectral::{plan, CosineTransform};
use crate::tridiag::ReflectedHelmholtz;
use crate::wiener::{NoiseIncrement, NoiseSource};

/// Hard magnitude cap for the explicit smoothed-noise scheme.
pub const BLOWUP_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    SemiImplicitEm,
    ExponentialEm,
    WongZakaiReference,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CoreError::Config(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(CoreError::Config(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.t_end > 0.0 && self.dt > self.t_end * (1.0 + 1e-12) {
            return Err(CoreError::Config(format!(
                "dt = {} exceeds t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(CoreError::Config("record_every must be >= 1".into()));
        }
        self.n_steps().map(|_| ())
    }

    /// Total step count; t_end must sit on the dt grid.
    pub fn n_steps(&self) -> Result<usize> {
        if self.t_end == 0.0 {
            return Ok(0);
        }
        let raw = self.t_end / self.dt;
        if raw > 1e15 {
            return Err(CoreError::Config(format!(
                "t_end/dt = {raw:.3e} exceeds the step budget"
            )));
        }
        let n = raw.round();
        if (raw - n).abs() > 1e-6 * n.max(1.0) {
            return Err(CoreError::Config(format!(
                "t_end = {} is not an integer multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Which drift the trajectory is currently following.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    KellerSegel,
    HeatContinuation,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::KellerSegel => "keller_segel",
            Regime::HeatContinuation => "heat_continuation",
        }
    }
}

/// Norms of one state, computed once per step and shared by the recorder and
/// the truncation hook so both see identical floating-point values.
#[derive(Clone, Copy, Debug)]
pub struct InstantNorms {
    pub mass_u: f64,
    pub l1_u: f64,
    pub l2_u: f64,
    pub gradv_l2: f64,
    pub lapv_l2: f64,
    /// |grad v|^2 + |Lap v|^2, the integrand of the running Sobolev integral.
    pub gradv_h1_sq: f64,
    pub min_u: f64,
    pub min_v: f64,
}

pub fn instant_norms(state: &State) -> InstantNorms {
    let gradv_l2 = state.v.h1_seminorm();
    let lapv_l2 = neumann_laplacian(&state.v, 1.0).l2();
    InstantNorms {
        mass_u: state.u.mass(),
        l1_u: state.u.l1(),
        l2_u: state.u.l2(),
        gradv_l2,
        lapv_l2,
        gradv_h1_sq: gradv_l2 * gradv_l2 + lapv_l2 * lapv_l2,
        min_u: state.u.min_value(),
        min_v: state.v.min_value(),
    }
}

/// One row of the per-step scalar log. Row i of a trajectory belongs to
/// global step start_step + i; t is always step * dt.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScalarRecord {
    pub t: f64,
    pub mass_u: f64,
    pub l1_u: f64,
    pub l2_u: f64,
    pub gradv_l2: f64,
    pub gradv_h1_integral: f64,
    /// Lyapunov functional W; NaN where the entropy term is undefined.
    pub lyapunov_w: f64,
    pub energy_e: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub regime: Regime,
    pub truncation_level: u32,
}

/// Recorded output of one integration: a scalar row per step, field
/// snapshots on the aligned recording grid, and the exact final state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub start_step: usize,
    pub dt: f64,
    pub scalars: Vec<ScalarRecord>,
    pub snapshot_steps: Vec<usize>,
    pub snapshots: Vec<State>,
    pub final_state: State,
}

impl Trajectory {
    pub fn end_step(&self) -> usize {
        self.start_step + self.scalars.len() - 1
    }

    pub fn end_time(&self) -> f64 {
        self.end_step() as f64 * self.dt
    }

    /// (t, state) pairs of the recorded snapshots.
    pub fn snapshot_series(&self) -> Vec<(f64, &State)> {
        self.snapshot_steps
            .iter()
            .zip(&self.snapshots)
            .map(|(&s, st)| (s as f64 * self.dt, st))
            .collect()
    }

    /// Prefix of this trajectory ending at global step `at_step`, with the
    /// supplied state as its endpoint.
    pub fn truncated(&self, at_step: usize, final_state: State) -> Trajectory {
        assert!(
            at_step >= self.start_step && at_step <= self.end_step(),
            "truncation step outside trajectory"
        );
        let keep = at_step - self.start_step + 1;
        let snap_keep = self
            .snapshot_steps
            .iter()
            .take_while(|&&s| s <= at_step)
            .count();
        Trajectory {
            start_step: self.start_step,
            dt: self.dt,
            scalars: self.scalars[..keep].to_vec(),
            snapshot_steps: self.snapshot_steps[..snap_keep].to_vec(),
            snapshots: self.snapshots[..snap_keep].to_vec(),
            final_state,
        }
    }

    /// Append a continuation that starts at this trajectory's end step.
    /// The continuation's duplicate boundary row is dropped.
    pub fn extend(&mut self, tail: &Trajectory) -> Result<()> {
        if tail.start_step != self.end_step() {
            return Err(CoreError::Invalid(format!(
                "continuation starts at step {} but trajectory ends at {}",
                tail.start_step,
                self.end_step()
            )));
        }
        if tail.dt != self.dt {
            return Err(CoreError::Invalid(
                "continuation has a different time step".into(),
            ));
        }
        self.scalars.extend_from_slice(&tail.scalars[1..]);
        for (&s, st) in tail.snapshot_steps.iter().zip(&tail.snapshots) {
            if self.snapshot_steps.last() == Some(&s) {
                continue;
            }
            self.snapshot_steps.push(s);
            self.snapshots.push(st.clone());
        }
        self.final_state = tail.final_state.clone();
        Ok(())
    }
}

/// Decision returned by a hook after observing a completed step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HookAction {
    Continue,
    SwitchToHeat,
}

#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub norms: InstantNorms,
}

/// Per-step observer with veto power over the nonlinear regime.
///
/// `attenuation` is sampled before each Keller-Segel step and multiplies the
/// chemotactic transport; `after_step` may demand the switch to the linear
/// heat regime. Hooks own per-trajectory state and are never shared.
pub trait StepHook {
    fn level(&self) -> u32 {
        0
    }

    /// Observe the initial state (time start, no step taken yet).
    fn on_start(&mut self, _norms: &InstantNorms, _t: f64) -> HookAction {
        HookAction::Continue
    }

    fn attenuation(&self) -> f64 {
        1.0
    }

    fn after_step(&mut self, _info: &StepInfo) -> HookAction {
        HookAction::Continue
    }
}

/// Hook that never intervenes.
pub struct NoHook;

impl StepHook for NoHook {}

/// Where and how a trajectory switched to the heat regime.
#[derive(Clone, Debug)]
pub struct SwitchPoint {
    pub step: usize,
    pub t: f64,
    pub state: State,
    /// Value of the recorded Sobolev running integral at the switch.
    pub gradv_h1_integral: f64,
}

#[derive(Clone, Debug)]
pub struct IntegrationOutput {
    pub trajectory: Trajectory,
    pub switch: Option<SwitchPoint>,
}

/// Start offset for continuation segments (concatenated truncation levels).
#[derive(Clone, Copy, Debug, Default)]
pub struct ResumePoint {
    pub start_step: usize,
    pub gradv_h1_integral: f64,
}

struct ModeWeights {
    /// expm1(z_m)
    em1: Vec<f64>,
    /// e^{z_m}
    ez: Vec<f64>,
    /// phi1(z_m) = (e^{z_m} - 1)/z_m, with phi1(0) = 1
    phi: Vec<f64>,
}

impl ModeWeights {
    fn new(dt: f64, diffusivity: f64, zeroth_order: f64, n_modes: usize) -> Self {
        let mut em1 = Vec::with_capacity(n_modes);
        let mut ez = Vec::with_capacity(n_modes);
        let mut phi = Vec::with_capacity(n_modes);
        for m in 0..n_modes {
            let w = m as f64 * std::f64::consts::PI;
            let z = dt * (zeroth_order - diffusivity * w * w);
            let e = z.exp_m1();
            em1.push(e);
            ez.push(e + 1.0);
            phi.push(if z == 0.0 { 1.0 } else { e / z });
        }
        ModeWeights { em1, ez, phi }
    }
}

enum Engine {
    SemiImplicit {
        solver_u: ReflectedHelmholtz,
        solver_v: ReflectedHelmholtz,
    },
    Exponential {
        transform: Arc<CosineTransform>,
        wu: ModeWeights,
        wv: ModeWeights,
    },
    WongZakai,
}

impl Engine {
    fn new(
        cfg: &SchemeConfig,
        state: &State,
        model: &ModelParams,
        eff: &EffectiveParams,
    ) -> Result<Self> {
        let grid = state.u.grid();
        match cfg.kind {
            SchemeKind::SemiImplicitEm => Ok(Engine::SemiImplicit {
                solver_u: ReflectedHelmholtz::new(grid, cfg.dt * model.r_u)?,
                solver_v: ReflectedHelmholtz::new(grid, cfg.dt * model.r_v)?,
            }),
            SchemeKind::ExponentialEm => {
                let n_modes = grid.n_nodes();
                Ok(Engine::Exponential {
                    transform: plan(grid),
                    wu: ModeWeights::new(cfg.dt, model.r_u, eff.gamma_u, n_modes),
                    wv: ModeWeights::new(cfg.dt, model.r_v, -eff.alpha_eff, n_modes),
                })
            }
            SchemeKind::WongZakaiReference => Ok(Engine::WongZakai),
        }
    }

    /// Advance `state` by one step. `w1`, `w2` are Wiener increments over dt
    /// for the EM schemes; the smoothed-noise scheme reads them as increments
    /// of the piecewise-linear path and divides by dt to recover slopes.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        state: &mut State,
        model: &ModelParams,
        eff: &EffectiveParams,
        dt: f64,
        w1: &Field,
        w2: &Field,
        attenuation: f64,
        regime: Regime,
    ) -> Result<()> {
        let heat = regime == Regime::HeatContinuation;
        let chi = if heat { 0.0 } else { model.chi };
        let beta = if heat { 0.0 } else { model.beta };
        match self {
            Engine::SemiImplicit { solver_u, solver_v } => {
                // rhs = dt * (r Lap x + explicit drift) + x dW; the solve
                // returns the increment, which vanishes identically at a
                // balanced steady state.
                let mut rhs_u = neumann_laplacian(&state.u, model.r_u);
                rhs_u.add_scaled(
                    &drift_u_explicit(&state.u, &state.v, chi, eff.gamma_u, attenuation),
                    1.0,
                );
                rhs_u.scale(dt);
                rhs_u.add_scaled(&diffusion_action(&state.u, w1), 1.0);

                let mut rhs_v = neumann_laplacian(&state.v, model.r_v);
                rhs_v.add_scaled(&drift_v_explicit(&state.u, &state.v, eff.alpha_eff, beta), 1.0);
                rhs_v.scale(dt);
                rhs_v.add_scaled(&diffusion_action(&state.v, w2), 1.0);

                solver_u.solve_in_place(rhs_u.values_mut());
                solver_v.solve_in_place(rhs_v.values_mut());
                state.u.add_scaled(&rhs_u, 1.0);
                state.v.add_scaled(&rhs_v, 1.0);
                Ok(())
            }
            Engine::Exponential { transform, wu, wv } => {
                // Sources without the zeroth-order terms (those live in the
                // exponent): pure transport for u, pure production for v.
                let src_u = drift_u_explicit(&state.u, &state.v, chi, 0.0, attenuation);
                let src_v = drift_v_explicit(&state.u, &state.v, 0.0, beta);
                let n_modes = state.u.grid().n_nodes();
                let mut a = vec![0.0; n_modes];
                let mut b = vec![0.0; n_modes];
                let mut c = vec![0.0; n_modes];
                let mut coef = vec![0.0; n_modes];

                transform.forward_into(state.u.values(), &mut a);
                transform.forward_into(diffusion_action(&state.u, w1).values(), &mut b);
                transform.forward_into(src_u.values(), &mut c);
                for m in 0..n_modes {
                    coef[m] = a[m] + wu.em1[m] * a[m] + wu.ez[m] * b[m] + dt * wu.phi[m] * c[m];
                }
                let noise_v = diffusion_action(&state.v, w2);
                transform.forward_into(state.v.values(), &mut a);
                transform.forward_into(noise_v.values(), &mut b);
                transform.forward_into(src_v.values(), &mut c);
                transform.inverse_into(&coef, state.u.values_mut());
                for m in 0..n_modes {
                    coef[m] = a[m] + wv.em1[m] * a[m] + wv.ez[m] * b[m] + dt * wv.phi[m] * c[m];
                }
                transform.inverse_into(&coef, state.v.values_mut());
                Ok(())
            }
            Engine::WongZakai => {
                // Midpoint step of the random ODE with slopes frozen over the
                // step; no Ito correction anywhere (raw alpha, no gamma).
                let inv_dt = 1.0 / dt;
                let mut s1 = w1.clone();
                s1.scale(inv_dt);
                let mut s2 = w2.clone();
                s2.scale(inv_dt);
                let rhs = |u: &Field, v: &Field| -> (Field, Field) {
                    let mut ku = neumann_laplacian(u, model.r_u);
                    ku.add_scaled(&drift_u_explicit(u, v, chi, 0.0, attenuation), 1.0);
                    ku.add_scaled(&diffusion_action(u, &s1), 1.0);
                    let mut kv = neumann_laplacian(v, model.r_v);
                    kv.add_scaled(&drift_v_explicit(u, v, model.alpha, beta), 1.0);
                    kv.add_scaled(&diffusion_action(v, &s2), 1.0);
                    (ku, kv)
                };
                let (k1u, k1v) = rhs(&state.u, &state.v);
                let mut mid_u = state.u.clone();
                let mut mid_v = state.v.clone();
                mid_u.add_scaled(&k1u, 0.5 * dt);
                mid_v.add_scaled(&k1v, 0.5 * dt);
                let (k2u, k2v) = rhs(&mid_u, &mid_v);
                state.u.add_scaled(&k2u, dt);
                state.v.add_scaled(&k2v, dt);
                let amp = state
                    .u
                    .values()
                    .iter()
                    .chain(state.v.values())
                    .fold(0.0f64, |m, &x| m.max(x.abs()));
                if !(amp <= BLOWUP_LIMIT) {
                    return Err(CoreError::Blowup {
                        step: 0,
                        limit: BLOWUP_LIMIT,
                    });
                }
                Ok(())
            }
        }
    }
}

/// One semi-implicit Euler-Maruyama step (standalone form).
pub fn step_semi_implicit(
    state: &State,
    model: &ModelParams,
    eff: &EffectiveParams,
    w1: &NoiseIncrement,
    w2: &NoiseIncrement,
    dt: f64,
) -> Result<State> {
    let cfg = SchemeConfig {
        kind: SchemeKind::SemiImplicitEm,
        dt,
        t_end: dt,
        record_every: 1,
    };
    let engine = Engine::new(&cfg, state, model, eff)?;
    let mut next = state.clone();
    engine.step(
        &mut next,
        model,
        eff,
        dt,
        &w1.field,
        &w2.field,
        1.0,
        Regime::KellerSegel,
    )?;
    Ok(next)
}

/// One exponential (mild-form) Euler-Maruyama step (standalone form).
pub fn step_exponential(
    state: &State,
    model: &ModelParams,
    eff: &EffectiveParams,
    w1: &NoiseIncrement,
    w2: &NoiseIncrement,
    dt: f64,
) -> Result<State> {
    let cfg = SchemeConfig {
        kind: SchemeKind::ExponentialEm,
        dt,
        t_end: dt,
        record_every: 1,
    };
    let engine = Engine::new(&cfg, state, model, eff)?;
    let mut next = state.clone();
    engine.step(
        &mut next,
        model,
        eff,
        dt,
        &w1.field,
        &w2.field,
        1.0,
        Regime::KellerSegel,
    )?;
    Ok(next)
}

/// One midpoint step of the random ODE driven by frozen slope fields.
pub fn step_wong_zakai(
    state: &State,
    model: &ModelParams,
    slope1: &Field,
    slope2: &Field,
    dt: f64,
) -> Result<State> {
    // The engine consumes path increments; slopes convert by * dt.
    let mut w1 = slope1.clone();
    w1.scale(dt);
    let mut w2 = slope2.clone();
    w2.scale(dt);
    let eff = EffectiveParams {
        convention: crate::conversion::CorrectionConvention::HalfGamma,
        gamma_u: 0.0,
        gamma_v: 0.0,
        alpha_eff: model.alpha,
    };
    let mut next = state.clone();
    Engine::WongZakai.step(
        &mut next,
        model,
        &eff,
        dt,
        &w1,
        &w2,
        1.0,
        Regime::KellerSegel,
    )?;
    Ok(next)
}

/// Integrate from `state0` at `resume.start_step` up to t_end.
///
/// The hook is consulted after every step; on a switch demand the run
/// continues in the linear heat regime driven by a fork of the noise source,
/// leaving the caller's source positioned at the switch. The caller can then
/// restart a new segment from the returned switch state and consume exactly
/// the draws the heat tail saw, which realizes the shift-operator coupling of
/// the concatenation construction on a single probability space.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    state0: &State,
    model: &ModelParams,
    eff: &EffectiveParams,
    lyap: &LyapunovParams,
    cfg: &SchemeConfig,
    noise: &mut dyn NoiseSource,
    hook: &mut dyn StepHook,
    resume: ResumePoint,
) -> Result<IntegrationOutput> {
    cfg.validate()?;
    model.validate()?;
    if state0.u.grid() != noise.grid() {
        return Err(CoreError::Invalid(
            "state and noise source use different grids".into(),
        ));
    }
    let n_total = cfg.n_steps()?;
    if resume.start_step > n_total {
        return Err(CoreError::Invalid(format!(
            "start step {} beyond final step {}",
            resume.start_step, n_total
        )));
    }
    let engine = Engine::new(cfg, state0, model, eff)?;
    let dt = cfg.dt;
    let tol_pos = 1e-10 * state0.u.max_value().max(1.0);

    let mut state = state0.clone();
    let mut regime = Regime::KellerSegel;
    let mut integral = resume.gradv_h1_integral;
    let mut switch: Option<SwitchPoint> = None;
    let mut forked: Option<Box<dyn NoiseSource>> = None;

    let mut scalars = Vec::with_capacity(n_total - resume.start_step + 1);
    let mut snapshot_steps = Vec::new();
    let mut snapshots = Vec::new();

    let record = |state: &State,
                  norms: &InstantNorms,
                  t: f64,
                  integral: f64,
                  regime: Regime,
                  level: u32| ScalarRecord {
        t,
        mass_u: norms.mass_u,
        l1_u: norms.l1_u,
        l2_u: norms.l2_u,
        gradv_l2: norms.gradv_l2,
        gradv_h1_integral: integral,
        lyapunov_w: lyapunov_w(state, lyap, tol_pos).unwrap_or(f64::NAN),
        energy_e: energy_e(state, lyap, tol_pos).unwrap_or(f64::NAN),
        min_u: norms.min_u,
        min_v: norms.min_v,
        regime,
        truncation_level: level,
    };

    let t0 = resume.start_step as f64 * dt;
    let norms0 = instant_norms(&state);
    if hook.on_start(&norms0, t0) == HookAction::SwitchToHeat {
        regime = Regime::HeatContinuation;
        switch = Some(SwitchPoint {
            step: resume.start_step,
            t: t0,
            state: state.clone(),
            gradv_h1_integral: integral,
        });
        forked = Some(noise.fork());
    }
    scalars.push(record(&state, &norms0, t0, integral, regime, hook.level()));
    if resume.start_step % cfg.record_every == 0 {
        snapshot_steps.push(resume.start_step);
        snapshots.push(state.clone());
    }

    for gstep in resume.start_step + 1..=n_total {
        let t = gstep as f64 * dt;
        let attenuation = if regime == Regime::KellerSegel {
            hook.attenuation()
        } else {
            1.0
        };
        let (w1, w2) = match forked.as_deref_mut() {
            Some(f) => f.next_pair(dt),
            None => noise.next_pair(dt),
        };
        engine
            .step(
                &mut state, model, eff, dt, &w1.field, &w2.field, attenuation, regime,
            )
            .map_err(|e| match e {
                CoreError::Blowup { limit, .. } => CoreError::Blowup { step: gstep, limit },
                other => other,
            })?;
        if !state.u.is_finite() {
            return Err(CoreError::NonFinite {
                quantity: "u",
                step: gstep,
                time: t,
            });
        }
        if !state.v.is_finite() {
            return Err(CoreError::NonFinite {
                quantity: "v",
                step: gstep,
                time: t,
            });
        }
        let norms = instant_norms(&state);
        integral += dt * norms.gradv_h1_sq;
        scalars.push(record(&state, &norms, t, integral, regime, hook.level()));
        if gstep % cfg.record_every == 0 {
            snapshot_steps.push(gstep);
            snapshots.push(state.clone());
        }
        if regime == Regime::KellerSegel {
            let info = StepInfo {
                step: gstep,
                t,
                dt,
                norms,
            };
            if hook.after_step(&info) == HookAction::SwitchToHeat {
                regime = Regime::HeatContinuation;
                switch = Some(SwitchPoint {
                    step: gstep,
                    t,
                    state: state.clone(),
                    gradv_h1_integral: integral,
                });
                forked = Some(noise.fork());
            }
        }
    }

    Ok(IntegrationOutput {
        trajectory: Trajectory {
            start_step: resume.start_step,
            dt,
            scalars,
            snapshot_steps,
            snapshots,
            final_state: state,
        },
        switch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::{effective_params, CorrectionConvention};
    use crate::field::GridSpec;
    use crate::wiener::{LiveNoise, NoiseSpec};
    use approx::assert_abs_diff_eq;

    fn zero_noise_source(grid: GridSpec) -> LiveNoise {
        LiveNoise::for_path(&NoiseSpec::off(), &NoiseSpec::off(), grid, 0, 0)
    }

    fn silent_eff(alpha: f64) -> EffectiveParams {
        effective_params(
            &NoiseSpec::off(),
            &NoiseSpec::off(),
            alpha,
            CorrectionConvention::HalfGamma,
        )
    }

    fn run(
        state0: &State,
        model: &ModelParams,
        kind: SchemeKind,
        dt: f64,
        t_end: f64,
    ) -> Trajectory {
        let cfg = SchemeConfig {
            kind,
            dt,
            t_end,
            record_every: 1,
        };
        let eff = silent_eff(model.alpha);
        let mut noise = zero_noise_source(state0.u.grid());
        integrate(
            state0,
            model,
            &eff,
            &LyapunovParams::default(),
            &cfg,
            &mut noise,
            &mut NoHook,
            ResumePoint::default(),
        )
        .unwrap()
        .trajectory
    }

    #[test]
    fn steady_state_is_fixed_for_both_schemes() {
        let g = GridSpec::new(64).unwrap();
        let (m, alpha, beta) = (1.3, 0.8, 0.6);
        let model = ModelParams {
            alpha,
            beta,
            ..ModelParams::default()
        };
        let u0 = Field::constant(g, m);
        let v0 = Field::constant(g, beta * m / alpha);
        let state = State::new(u0, v0).unwrap();
        for kind in [SchemeKind::SemiImplicitEm, SchemeKind::ExponentialEm] {
            let traj = run(&state, &model, kind, 1e-3, 0.2);
            let ue = traj.final_state.u.values();
            let ve = traj.final_state.v.values();
            for j in 0..ue.len() {
                assert!((ue[j] - m).abs() < 1e-12, "{kind:?} u drifted: {}", ue[j]);
                assert!(
                    (ve[j] - beta * m / alpha).abs() < 1e-12,
                    "{kind:?} v drifted: {}",
                    ve[j]
                );
            }
        }
    }

    #[test]
    fn mass_is_conserved_without_noise() {
        let g = GridSpec::new(64).unwrap();
        let u0 = Field::from_fn(g, |x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos());
        let v0 = Field::zeros(g);
        let state = State::new(u0, v0).unwrap();
        let model = ModelParams::default();
        let traj = run(&state, &model, SchemeKind::SemiImplicitEm, 1e-3, 0.2);
        let m0 = traj.scalars[0].mass_u;
        for row in &traj.scalars {
            assert!(
                (row.mass_u - m0).abs() <= 1e-12 * m0,
                "mass drift at t = {}: {} vs {}",
                row.t,
                row.mass_u,
                m0
            );
        }
    }

    #[test]
    fn exponential_scheme_tracks_eigen_decay_exactly_in_time() {
        let g = GridSpec::new(64).unwrap();
        let model = ModelParams {
            chi: 0.0,
            ..ModelParams::default()
        };
        let u0 = Field::from_fn(g, |x| (std::f64::consts::PI * x).cos());
        let state = State::new(u0, Field::zeros(g)).unwrap();
        let traj = run(&state, &model, SchemeKind::ExponentialEm, 0.0125, 0.5);
        let decay = (-model.r_u * std::f64::consts::PI.powi(2) * 0.5).exp();
        let ue = traj.final_state.u.values();
        for j in 0..=64 {
            let expect = decay * (std::f64::consts::PI * g.node(j)).cos();
            assert!(
                (ue[j] - expect).abs() < 1e-9,
                "node {j}: {} vs {expect}",
                ue[j]
            );
        }
    }

    #[test]
    fn constant_source_signal_is_exact_for_exponential_scheme() {
        // u = 2 held by the dynamics, v' = beta u - alpha v from 0:
        // v(t) = 2(1 - e^{-t}) at alpha = beta = 1.
        let g = GridSpec::new(16).unwrap();
        let model = ModelParams::default();
        let state = State::new(Field::constant(g, 2.0), Field::zeros(g)).unwrap();
        let traj = run(&state, &model, SchemeKind::ExponentialEm, 1e-3, 1.0);
        let expect = 2.0 * (1.0 - (-1.0f64).exp());
        for &v in traj.final_state.v.values() {
            assert!((v - expect).abs() < 1e-9, "v = {v} vs {expect}");
        }
    }

    #[test]
    fn schemes_agree_to_second_order_over_one_step() {
        let g = GridSpec::new(256).unwrap();
        let model = ModelParams::default();
        let eff = silent_eff(model.alpha);
        let u0 = Field::from_fn(g, |x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos());
        let v0 = Field::from_fn(g, |x| 0.3 * (std::f64::consts::PI * x).cos());
        let state = State::new(u0, v0).unwrap();
        let zero = NoiseIncrement {
            field: Field::zeros(g),
            dt: 0.0,
        };
        let gap = |dt: f64| -> f64 {
            let a = step_semi_implicit(&state, &model, &eff, &zero, &zero, dt).unwrap();
            let b = step_exponential(&state, &model, &eff, &zero, &zero, dt).unwrap();
            let mut du = a.u.clone();
            du.add_scaled(&b.u, -1.0);
            let mut dv = a.v.clone();
            dv.add_scaled(&b.v, -1.0);
            du.l2().hypot(dv.l2())
        };
        // dt must keep dt * pi^2 well below 1 or the ratio sits in the
        // pre-asymptotic range
        let ratio = gap(0.005) / gap(0.0025);
        assert!(
            (3.3..=4.7).contains(&ratio),
            "one-step gap ratio {ratio} not second order"
        );
    }

    #[test]
    fn zero_steps_returns_initial_state_only() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let cfg = SchemeConfig {
            kind: SchemeKind::ExponentialEm,
            dt: 0.1,
            t_end: 0.0,
            record_every: 1,
        };
        let mut noise = zero_noise_source(g);
        let out = integrate(
            &state,
            &ModelParams::default(),
            &silent_eff(1.0),
            &LyapunovParams::default(),
            &cfg,
            &mut noise,
            &mut NoHook,
            ResumePoint::default(),
        )
        .unwrap();
        assert_eq!(out.trajectory.scalars.len(), 1);
        assert_eq!(out.trajectory.final_state.u.values(), state.u.values());
    }

    #[test]
    fn snapshot_count_matches_recording_stride() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let cfg = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.01,
            t_end: 1.0,
            record_every: 10,
        };
        let mut noise = zero_noise_source(g);
        let out = integrate(
            &state,
            &ModelParams::default(),
            &silent_eff(1.0),
            &LyapunovParams::default(),
            &cfg,
            &mut noise,
            &mut NoHook,
            ResumePoint::default(),
        )
        .unwrap();
        assert_eq!(out.trajectory.snapshots.len(), 11);
        assert_eq!(out.trajectory.scalars.len(), 101);
        assert_eq!(out.trajectory.end_step(), 100);
    }

    #[test]
    fn identical_seeds_reproduce_trajectories_bitwise() {
        let g = GridSpec::new(32).unwrap();
        let spec = NoiseSpec::new(1.5, 4, 0.4).unwrap();
        let state = State::new(
            Field::from_fn(g, |x| 1.0 + 0.2 * (std::f64::consts::PI * x).cos()),
            Field::constant(g, 0.5),
        )
        .unwrap();
        let model = ModelParams::default();
        let eff = effective_params(&spec, &spec, model.alpha, CorrectionConvention::HalfGamma);
        let cfg = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 1e-3,
            t_end: 0.05,
            record_every: 10,
        };
        let go = || {
            let mut noise = LiveNoise::for_path(&spec, &spec, g, 42, 7);
            integrate(
                &state,
                &model,
                &eff,
                &LyapunovParams::default(),
                &cfg,
                &mut noise,
                &mut NoHook,
                ResumePoint::default(),
            )
            .unwrap()
            .trajectory
        };
        let a = go();
        let b = go();
        assert_eq!(a.final_state.u.values(), b.final_state.u.values());
        assert_eq!(a.final_state.v.values(), b.final_state.v.values());
        for (ra, rb) in a.scalars.iter().zip(&b.scalars) {
            assert_eq!(ra.l2_u.to_bits(), rb.l2_u.to_bits());
            assert_eq!(
                ra.gradv_h1_integral.to_bits(),
                rb.gradv_h1_integral.to_bits()
            );
        }
    }

    #[test]
    fn smoothed_noise_scalar_step_is_quadratic_in_the_increment() {
        // Flat mode, constant u, no coupling: one midpoint step multiplies u
        // by 1 + db + db^2/2.
        let g = GridSpec::new(4).unwrap();
        let model = ModelParams {
            chi: 0.0,
            beta: 0.0,
            alpha: 0.0,
            ..ModelParams::default()
        };
        let state = State::new(Field::constant(g, 1.5), Field::zeros(g)).unwrap();
        let dt = 0.25;
        let db = 0.3;
        let slope = Field::constant(g, db / dt);
        let next = step_wong_zakai(&state, &model, &slope, &Field::zeros(g), dt).unwrap();
        let expect = 1.5 * (1.0 + db + db * db / 2.0);
        for &x in next.u.values() {
            assert_abs_diff_eq!(x, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothed_noise_blowup_is_reported() {
        let g = GridSpec::new(4).unwrap();
        let model = ModelParams {
            chi: 0.0,
            beta: 0.0,
            alpha: 0.0,
            ..ModelParams::default()
        };
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let slope = Field::constant(g, 1e8);
        let err = step_wong_zakai(&state, &model, &slope, &Field::zeros(g), 1.0).unwrap_err();
        assert!(matches!(err, CoreError::Blowup { .. }), "{err}");
    }

    #[test]
    fn signal_decay_matches_midpoint_accuracy_without_noise() {
        let g = GridSpec::new(8).unwrap();
        let model = ModelParams {
            chi: 0.0,
            beta: 0.0,
            alpha: 2.0,
            ..ModelParams::default()
        };
        let state = State::new(Field::zeros(g), Field::constant(g, 1.0)).unwrap();
        let traj = run(&state, &model, SchemeKind::WongZakaiReference, 1e-2, 1.0);
        let expect = (-2.0f64).exp();
        for &v in traj.final_state.v.values() {
            // Midpoint scheme: global error O(dt^2).
            assert!((v - expect).abs() < 1e-3, "v = {v} vs {expect}");
        }
    }

    #[test]
    fn truncate_and_extend_restore_the_row_sequence() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::constant(g, 1.0)).unwrap();
        let traj = run(
            &state,
            &ModelParams::default(),
            SchemeKind::SemiImplicitEm,
            0.01,
            0.4,
        );
        let cut = 17;
        let head = traj.truncated(cut, traj.snapshots[0].clone());
        assert_eq!(head.scalars.len(), cut + 1);
        assert_eq!(head.end_step(), cut);

        // A tail starting exactly at the cut glues back to the full length.
        let tail = Trajectory {
            start_step: cut,
            dt: traj.dt,
            scalars: traj.scalars[cut..].to_vec(),
            snapshot_steps: traj
                .snapshot_steps
                .iter()
                .copied()
                .filter(|&s| s >= cut)
                .collect(),
            snapshots: traj
                .snapshot_steps
                .iter()
                .zip(&traj.snapshots)
                .filter(|(&s, _)| s >= cut)
                .map(|(_, st)| st.clone())
                .collect(),
            final_state: traj.final_state.clone(),
        };
        let mut glued = head;
        glued.extend(&tail).unwrap();
        assert_eq!(glued.scalars.len(), traj.scalars.len());
        assert_eq!(glued.snapshot_steps, traj.snapshot_steps);
        assert_eq!(glued.end_time(), traj.end_time());
    }

    #[test]
    fn config_rejects_misaligned_horizon() {
        let cfg = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.3,
            t_end: 1.0,
            record_every: 1,
        };
        assert!(cfg.validate().is_err());
        let ok = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.25,
            t_end: 1.0,
            record_every: 1,
        };
        assert_eq!(ok.n_steps().unwrap(), 4);
    }
}
