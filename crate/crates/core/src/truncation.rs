//! Drift truncation and stopped trajectories.
//!
//! Three running functionals of a trajectory (the sup of |u|_L1, the sup of
//! |grad v|_L2, and the time integral of the squared H1 norm of grad v) feed
//! a smooth cutoff that attenuates the chemotactic transport as they approach
//! a level threshold, and a stopping rule that freezes the nonlinearity
//! entirely once a threshold is hit. A stopped trajectory is continued by the
//! linear heat system up to the horizon, and restarted at the next level from
//! the stopped state, producing a sequence of runs that agree on an ever
//! longer prefix.
//!
//! Thresholds are checked at step boundaries only; a trigger is localized to
//! within one dt. The smooth cutoff equals one on the whole region where the
//! stopping rule has not yet fired (for threshold scales >= 1), so below the
//! trigger the attenuated drift is bitwise identical to the plain drift.

use serde::{Deserialize, Serialize};

use crate::conversion::EffectiveParams;
use crate::diagnostics::LyapunovParams;
use crate::dynamics::{drift_u_full, ModelParams, State};
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::integrator::{
    instant_norms, integrate, step_exponential, step_semi_implicit, step_wong_zakai, HookAction,
    InstantNorms, ResumePoint, SchemeConfig, SchemeKind, StepHook, StepInfo, Trajectory,
};
use crate::wiener::{NoiseIncrement, NoiseSource};

/// The pinned smooth bump: 1 on [-1,1], 0 outside (-2,2), and the standard
/// mollifier crossover q(2-|y|)/(q(2-|y|)+q(|y|-1)) with q(s) = exp(-1/s)
/// in between. All derivatives vanish at the junctions.
pub fn bump(y: f64) -> f64 {
    let a = y.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let q = |s: f64| (-1.0 / s).exp();
        let up = q(2.0 - a);
        up / (up + q(a - 1.0))
    }
}

/// A threshold level together with the physical scale one level unit maps to.
///
/// Level n with multiplier c gives threshold scale n*c; the cutoff profile is
/// exactly 1 up to the scale and exactly 0 from twice the scale on.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CutoffSpec {
    level: u32,
    multiplier: f64,
}

impl CutoffSpec {
    pub fn new(level: u32, multiplier: f64) -> Result<Self> {
        if level == 0 {
            return Err(CoreError::Config("cutoff level must be >= 1".into()));
        }
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(CoreError::Config(format!(
                "cutoff multiplier must be positive and finite, got {multiplier}"
            )));
        }
        Ok(CutoffSpec { level, multiplier })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn scale(&self) -> f64 {
        self.level as f64 * self.multiplier
    }
}

/// The scaled cutoff: 1 for |x| <= scale, 0 for |x| >= 2*scale.
pub fn smooth_cutoff(spec: &CutoffSpec, x: f64) -> f64 {
    bump(x / spec.scale())
}

/// Monotone records of one trajectory segment, accumulated step by step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningFunctionals {
    /// sup so far of |u|_L1
    pub h1: f64,
    /// sup so far of |grad v|_L2
    pub h2: f64,
    /// integral so far of |grad v|_L2^2 + |Lap v|_L2^2
    pub h3: f64,
}

impl RunningFunctionals {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one observed state into the records. `dt` is the time the state
    /// is held for the integral term; pass 0 for the segment's initial state.
    pub fn absorb(&mut self, norms: &InstantNorms, dt: f64) {
        self.h1 = self.h1.max(norms.l1_u);
        self.h2 = self.h2.max(norms.gradv_l2);
        self.h3 += dt * norms.gradv_h1_sq;
    }
}

/// Functional form of the accumulator update, computing the norms itself.
pub fn update_functionals(
    rf: &RunningFunctionals,
    state: &State,
    dt: f64,
) -> RunningFunctionals {
    let mut out = *rf;
    out.absorb(&instant_norms(state), dt);
    out
}

/// Which running functional crossed its threshold first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TriggerKind {
    #[serde(rename = "u_l1_sup")]
    UL1Sup,
    #[serde(rename = "gradv_l2_sup")]
    GradVL2Sup,
    #[serde(rename = "gradv_h1_integral")]
    GradVH1Integral,
}

impl TriggerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerKind::UL1Sup => "u_l1_sup",
            TriggerKind::GradVL2Sup => "gradv_l2_sup",
            TriggerKind::GradVH1Integral => "gradv_h1_integral",
        }
    }
}

/// First threshold violation, if any. The gradient record enters squared;
/// the checks are ordered, the u record winning ties.
pub fn check_stopping(rf: &RunningFunctionals, spec: &CutoffSpec) -> Option<TriggerKind> {
    let scale = spec.scale();
    if rf.h1 >= scale {
        Some(TriggerKind::UL1Sup)
    } else if rf.h2 * rf.h2 >= scale {
        Some(TriggerKind::GradVL2Sup)
    } else if rf.h3 >= scale {
        Some(TriggerKind::GradVH1Integral)
    } else {
        None
    }
}

/// Product of the three cutoff factors, each fed the raw record.
pub fn attenuation_factor(rf: &RunningFunctionals, spec: &CutoffSpec) -> f64 {
    smooth_cutoff(spec, rf.h1) * smooth_cutoff(spec, rf.h2) * smooth_cutoff(spec, rf.h3)
}

/// Cell drift with the chemotactic term attenuated by the cutoff product.
pub fn truncated_drift_u(
    u: &Field,
    v: &Field,
    model: &ModelParams,
    gamma_u: f64,
    rf: &RunningFunctionals,
    spec: &CutoffSpec,
) -> Field {
    drift_u_full(
        u,
        v,
        model.r_u,
        model.chi,
        gamma_u,
        attenuation_factor(rf, spec),
    )
}

/// One step of the linear continuation system: chemotaxis and the production
/// coupling are dropped, the zeroth-order terms stay. The signal equation
/// decouples from the cells entirely.
pub fn heat_continuation_step(
    state: &State,
    model: &ModelParams,
    eff: &EffectiveParams,
    kind: SchemeKind,
    w1: &NoiseIncrement,
    w2: &NoiseIncrement,
    dt: f64,
) -> Result<State> {
    let linear = ModelParams {
        chi: 0.0,
        beta: 0.0,
        ..*model
    };
    match kind {
        SchemeKind::SemiImplicitEm => step_semi_implicit(state, &linear, eff, w1, w2, dt),
        SchemeKind::ExponentialEm => step_exponential(state, &linear, eff, w1, w2, dt),
        SchemeKind::WongZakaiReference => {
            let mut s1 = w1.field.clone();
            s1.scale(1.0 / dt);
            let mut s2 = w2.field.clone();
            s2.scale(1.0 / dt);
            step_wong_zakai(state, &linear, &s1, &s2, dt)
        }
    }
}

/// Step hook that maintains the running functionals, attenuates the
/// transport near a threshold, and demands the heat switch at the first
/// violation. Checks run at every step boundary including the segment start.
pub struct TruncationHook {
    spec: CutoffSpec,
    rf: RunningFunctionals,
    trigger: Option<TriggerKind>,
}

impl TruncationHook {
    pub fn new(spec: CutoffSpec) -> Self {
        TruncationHook {
            spec,
            rf: RunningFunctionals::new(),
            trigger: None,
        }
    }

    pub fn functionals(&self) -> &RunningFunctionals {
        &self.rf
    }

    pub fn trigger(&self) -> Option<TriggerKind> {
        self.trigger
    }

    fn check(&mut self) -> HookAction {
        match check_stopping(&self.rf, &self.spec) {
            Some(kind) if self.trigger.is_none() => {
                self.trigger = Some(kind);
                HookAction::SwitchToHeat
            }
            _ => HookAction::Continue,
        }
    }
}

impl StepHook for TruncationHook {
    fn level(&self) -> u32 {
        self.spec.level()
    }

    fn on_start(&mut self, norms: &InstantNorms, _t: f64) -> HookAction {
        self.rf.absorb(norms, 0.0);
        self.check()
    }

    fn attenuation(&self) -> f64 {
        attenuation_factor(&self.rf, &self.spec)
    }

    fn after_step(&mut self, info: &StepInfo) -> HookAction {
        if self.trigger.is_some() {
            return HookAction::Continue;
        }
        self.rf.absorb(&info.norms, info.dt);
        self.check()
    }
}

/// Level schedule for the concatenation construction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub level_max: u32,
    /// Physical scale of one level unit; thresholds are level * multiplier.
    pub threshold_multiplier: f64,
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<()> {
        CutoffSpec::new(self.level_max.max(1), self.threshold_multiplier).map(|_| ())?;
        if self.level_max == 0 {
            return Err(CoreError::Config("level_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one level: how long it ran before stopping, what stopped it,
/// the cumulative stopped time, and whether that already covers the horizon.
/// Durations are censored at the horizon; a level that starts there reports
/// a zero duration and no trigger.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevelEvent {
    pub level: u32,
    pub tau_star: f64,
    pub trigger: Option<TriggerKind>,
    pub tau_bar: f64,
    pub reached_t: bool,
}

/// All levels of one path: per-level events and per-level trajectories.
/// Trajectory n covers [0, T] with the heat continuation appended after the
/// level's trigger; consecutive trajectories share their common prefix
/// bit for bit by construction.
#[derive(Clone, Debug)]
pub struct ConcatenatedRun {
    pub events: Vec<LevelEvent>,
    pub levels: Vec<Trajectory>,
}

impl ConcatenatedRun {
    /// The deepest level's trajectory, defined on all of [0, T].
    pub fn final_trajectory(&self) -> &Trajectory {
        self.levels.last().expect("at least one level")
    }
}

/// Run the stopped/restarted hierarchy: level n runs the attenuated system
/// from the previous stopped state with thresholds n * multiplier and fresh
/// accumulators; at its trigger the trajectory continues as the linear heat
/// system to the horizon, while the next level restarts from the stopped
/// state and re-reads exactly the noise the continuation saw, realizing the
/// time-shift coupling on a single noise realization.
pub fn run_concatenated(
    state0: &State,
    model: &ModelParams,
    eff: &EffectiveParams,
    lyap: &LyapunovParams,
    scheme: &SchemeConfig,
    trunc: &TruncationConfig,
    noise: &mut dyn NoiseSource,
) -> Result<ConcatenatedRun> {
    trunc.validate()?;
    scheme.validate()?;
    let n_total = scheme.n_steps()?;
    let dt = scheme.dt;
    let horizon = n_total as f64 * dt;

    let mut events = Vec::with_capacity(trunc.level_max as usize);
    let mut levels: Vec<Trajectory> = Vec::with_capacity(trunc.level_max as usize);
    // Trajectory on [0, tau_bar] shared by every deeper level.
    let mut backbone: Option<Trajectory> = None;
    let mut carry_state = state0.clone();
    let mut carry_step = 0usize;
    let mut carry_integral = 0.0f64;

    for level in 1..=trunc.level_max {
        if carry_step >= n_total && !levels.is_empty() {
            events.push(LevelEvent {
                level,
                tau_star: 0.0,
                trigger: None,
                tau_bar: horizon,
                reached_t: true,
            });
            levels.push(levels.last().expect("nonempty").clone());
            continue;
        }

        let spec = CutoffSpec::new(level, trunc.threshold_multiplier)?;
        let mut hook = TruncationHook::new(spec);
        let out = integrate(
            &carry_state,
            model,
            eff,
            lyap,
            scheme,
            noise,
            &mut hook,
            ResumePoint {
                start_step: carry_step,
                gradv_h1_integral: carry_integral,
            },
        )
        .map_err(|e| e.at_level(level))?;

        let full = match &backbone {
            None => out.trajectory.clone(),
            Some(b) => {
                let mut t = b.clone();
                t.extend(&out.trajectory).map_err(|e| e.at_level(level))?;
                t
            }
        };

        match out.switch {
            Some(sw) => {
                events.push(LevelEvent {
                    level,
                    tau_star: (sw.step - carry_step) as f64 * dt,
                    trigger: hook.trigger(),
                    tau_bar: sw.step as f64 * dt,
                    reached_t: sw.step >= n_total,
                });
                backbone = Some(full.truncated(sw.step, sw.state.clone()));
                carry_state = sw.state;
                carry_step = sw.step;
                carry_integral = sw.gradv_h1_integral;
            }
            None => {
                events.push(LevelEvent {
                    level,
                    tau_star: (n_total - carry_step) as f64 * dt,
                    trigger: None,
                    tau_bar: horizon,
                    reached_t: true,
                });
                carry_state = full.final_state.clone();
                carry_step = n_total;
                carry_integral = full
                    .scalars
                    .last()
                    .map(|r| r.gradv_h1_integral)
                    .unwrap_or(carry_integral);
                backbone = Some(full.clone());
            }
        }
        levels.push(full);
    }

    Ok(ConcatenatedRun { events, levels })
}
