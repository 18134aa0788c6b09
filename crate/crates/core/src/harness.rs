//! Monte Carlo orchestration: path ensembles, convergence ladders, the
//! smoothed-noise arbitration experiment, and stopping-event statistics.
//!
//! Reproducibility contract: path i always draws from Gaussian streams
//! (base_seed, 2i) and (base_seed, 2i+1), work is distributed over a local
//! worker pool, and every reduction runs in path-index order, so a report is
//! bit-identical for any worker count. Failed paths are recorded as data and
//! never abort the ensemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::conversion::{effective_params, CorrectionConvention, EffectiveParams};
use crate::diagnostics::{moment_functionals, LyapunovParams};
use crate::dynamics::{ModelParams, State};
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::integrator::{integrate, NoHook, ResumePoint, SchemeConfig, SchemeKind, Trajectory};
use crate::truncation::{run_concatenated, TruncationConfig};
use crate::wiener::{
    BrownianLattice, GaussianStream, LatticeNoise, LiveNoise, NoiseSampler, NoiseSpec, StreamKey,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Moments,
    StrongOrder,
    WongZakai,
    TruncationEvents,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub experiment: Experiment,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(CoreError::Config("ensemble.n_paths must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(CoreError::Config("ensemble.workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything one path needs, shared immutably by all workers.
#[derive(Clone, Copy)]
pub struct PathProblem<'a> {
    pub state0: &'a State,
    pub model: &'a ModelParams,
    pub eff: &'a EffectiveParams,
    pub lyap: &'a LyapunovParams,
    pub scheme: &'a SchemeConfig,
    pub noise1: &'a NoiseSpec,
    pub noise2: &'a NoiseSpec,
}

/// Mean, sample variance, and normal-approximation 95% half-width.
/// Half-widths of sup-type functionals are approximate by nature.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub half_width_95: f64,
    pub n: usize,
}

pub fn summarize(samples: &[f64]) -> Summary {
    let n = samples.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            variance: f64::NAN,
            half_width_95: f64::NAN,
            n,
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = if n < 2 {
        0.0
    } else {
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    };
    Summary {
        mean,
        variance,
        half_width_95: 1.96 * (variance / n as f64).sqrt(),
        n,
    }
}

/// Least-squares slope of log(y) against log(x).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Set when some ordinate sits at the floating-point floor, where the
    /// log-log model is meaningless.
    pub degenerate: bool,
}

const ERROR_FLOOR: f64 = 1e-13;

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(CoreError::Invalid(format!(
            "log-log fit needs >= 3 matched points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().any(|&x| x <= 0.0) {
        return Err(CoreError::Invalid("log-log fit needs positive abscissae".into()));
    }
    let degenerate = ys.iter().any(|&y| y < ERROR_FLOOR);
    let lx: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.max(ERROR_FLOOR).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = if lx.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        degenerate,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PathFailure {
    pub path: usize,
    pub message: String,
}

/// One abscissa of a study curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LadderPoint {
    /// dt, refinement factor, or level, depending on the experiment.
    pub parameter: f64,
    pub value: f64,
    pub half_width: f64,
    /// Companion curve where the experiment has one (the full-correction gap
    /// for the arbitration study, m * P(early stop) for stopping events).
    pub secondary: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PathRecord {
    pub path: usize,
    /// Layout documented per experiment on the producing function.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyResult {
    pub experiment: Experiment,
    pub points: Vec<LadderPoint>,
    pub slope: Option<SlopeFit>,
    pub verdict: Option<String>,
    pub n_paths: usize,
    pub per_path: Vec<PathRecord>,
    pub failures: Vec<PathFailure>,
}

/// Ensemble statistics of the pathwise moment functionals.
#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub p: f64,
    pub n_paths: usize,
    pub n_failed: usize,
    pub sup_l1_u: Summary,
    pub sup_gradv_l2_sq: Summary,
    pub int_gradv_h1_sq: Summary,
    pub sup_l1_u_pow_p: Summary,
    pub sup_gradv_l2_sq_pow_p: Summary,
    /// Computed over the paths where W is defined throughout.
    pub sup_lyapunov_w: Summary,
    pub failures: Vec<PathFailure>,
}

fn run_pool<T: Send>(
    n_paths: usize,
    workers: usize,
    job: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<std::result::Result<T, String>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CoreError::Invalid(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| job(i).map_err(|e| e.to_string()))
            .collect()
    }))
}

fn split_outcomes<T>(
    outcomes: Vec<std::result::Result<T, String>>,
) -> (Vec<(usize, T)>, Vec<PathFailure>) {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (path, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(t) => ok.push((path, t)),
            Err(message) => failures.push(PathFailure { path, message }),
        }
    }
    (ok, failures)
}

/// Ensemble of full-system paths, reduced to the moment functionals.
pub fn run_moments(problem: &PathProblem, ens: &EnsembleConfig, p: f64) -> Result<MomentReport> {
    ens.validate()?;
    problem.scheme.validate()?;
    let grid = problem.state0.u.grid();
    let outcomes = run_pool(ens.n_paths, ens.workers, |i| {
        let mut noise = LiveNoise::for_path(
            problem.noise1,
            problem.noise2,
            grid,
            ens.base_seed,
            i as u64,
        );
        let out = integrate(
            problem.state0,
            problem.model,
            problem.eff,
            problem.lyap,
            problem.scheme,
            &mut noise,
            &mut NoHook,
            ResumePoint::default(),
        )?;
        moment_functionals(&out.trajectory, p)
    })?;
    let (ok, failures) = split_outcomes(outcomes);
    let col = |f: &dyn Fn(&crate::diagnostics::PathFunctionals) -> f64| -> Vec<f64> {
        ok.iter().map(|(_, pf)| f(pf)).collect()
    };
    let sup_w: Vec<f64> = ok
        .iter()
        .map(|(_, pf)| pf.sup_lyapunov_w)
        .filter(|w| w.is_finite())
        .collect();
    Ok(MomentReport {
        p,
        n_paths: ens.n_paths,
        n_failed: failures.len(),
        sup_l1_u: summarize(&col(&|pf| pf.sup_l1_u)),
        sup_gradv_l2_sq: summarize(&col(&|pf| pf.sup_gradv_l2_sq)),
        int_gradv_h1_sq: summarize(&col(&|pf| pf.int_gradv_h1_sq)),
        sup_l1_u_pow_p: summarize(&col(&|pf| pf.sup_l1_u_pow_p)),
        sup_gradv_l2_sq_pow_p: summarize(&col(&|pf| pf.sup_gradv_l2_sq.powf(p))),
        sup_lyapunov_w: summarize(&sup_w),
        failures,
    })
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CoreError::Config(msg.into()))
    }
}

/// Strong-error ladder against the exact scalar solution.
///
/// The setup must be the scalar reduction (flat-mode noise on u, no
/// transport, no coupling, constant initial density): there the exact
/// endpoint is u0 * exp(lambda_0 * B(T)) with B the mode-0 Brownian path,
/// and the correct drift correction makes the scheme converge to it at
/// strong order 1/2 while the wrong one leaves an O(1) gap.
///
/// All dt levels of one path consume the same Brownian lattice, refined at
/// the smallest dt. `per_path` values are the endpoint errors per level, in
/// ladder order. The fitted slope refers to the mean absolute error curve.
pub fn run_strong_order(
    problem: &PathProblem,
    ens: &EnsembleConfig,
    dt_ladder: &[f64],
) -> Result<StudyResult> {
    ens.validate()?;
    require(dt_ladder.len() >= 4, "strong-order ladder needs >= 4 dt values")?;
    require(
        problem.scheme.kind != SchemeKind::WongZakaiReference,
        "strong-order study measures the EM schemes",
    )?;
    require(
        problem.noise1.mode_cutoff() == 0,
        "scalar reduction requires flat-mode noise (K = 0)",
    )?;
    require(problem.model.chi == 0.0, "scalar reduction requires chi = 0")?;
    require(problem.model.beta == 0.0, "scalar reduction requires beta = 0")?;
    require(
        problem.state0.u.max_value() == problem.state0.u.min_value(),
        "scalar reduction requires a constant initial density",
    )?;
    let t_end = problem.scheme.t_end;
    let dt_fine = *dt_ladder.last().expect("nonempty ladder");
    let mut aggregates = Vec::with_capacity(dt_ladder.len());
    for (i, &dt) in dt_ladder.iter().enumerate() {
        require(dt > 0.0 && dt.is_finite(), "dt ladder must be positive")?;
        if i > 0 {
            require(dt < dt_ladder[i - 1], "dt ladder must decrease")?;
        }
        let ratio = dt / dt_fine;
        require(
            (ratio - ratio.round()).abs() < 1e-9 && ratio >= 1.0,
            "every ladder dt must be an integer multiple of the smallest",
        )?;
        aggregates.push(ratio.round() as usize);
        SchemeConfig {
            dt,
            ..*problem.scheme
        }
        .validate()?;
    }
    let n_fine = SchemeConfig {
        dt: dt_fine,
        ..*problem.scheme
    }
    .n_steps()?;
    let grid = problem.state0.u.grid();
    let sampler1 = Arc::new(NoiseSampler::new(problem.noise1, grid));
    let sampler2 = Arc::new(NoiseSampler::new(problem.noise2, grid));
    let lam0 = problem.noise1.lambda(0);
    let u0 = problem.state0.u.max_value();

    let outcomes = run_pool(ens.n_paths, ens.workers, |i| {
        let mut s1 = GaussianStream::new(StreamKey {
            seed: ens.base_seed,
            stream: 2 * i as u64,
        });
        let mut s2 = GaussianStream::new(StreamKey {
            seed: ens.base_seed,
            stream: 2 * i as u64 + 1,
        });
        let lat1 = Arc::new(BrownianLattice::sample(
            problem.noise1.mode_cutoff(),
            n_fine,
            dt_fine,
            &mut s1,
        ));
        let lat2 = Arc::new(BrownianLattice::sample(
            problem.noise2.mode_cutoff(),
            n_fine,
            dt_fine,
            &mut s2,
        ));
        let exact = u0 * (lam0 * lat1.path_value(0, t_end)).exp();
        let mut errs = Vec::with_capacity(dt_ladder.len());
        for (&dt, &agg) in dt_ladder.iter().zip(&aggregates) {
            let cfg = SchemeConfig {
                dt,
                record_every: usize::MAX,
                ..*problem.scheme
            };
            let mut noise = LatticeNoise::new(
                sampler1.clone(),
                sampler2.clone(),
                lat1.clone(),
                lat2.clone(),
                agg,
            );
            let out = integrate(
                problem.state0,
                problem.model,
                problem.eff,
                problem.lyap,
                &cfg,
                &mut noise,
                &mut NoHook,
                ResumePoint::default(),
            )?;
            let mut d = out.trajectory.final_state.u.clone();
            d.add_scaled(&Field::constant(grid, exact), -1.0);
            errs.push(d.l2());
        }
        Ok(errs)
    })?;
    let (ok, failures) = split_outcomes(outcomes);
    require(!ok.is_empty(), "all paths failed")?;
    let mut points = Vec::with_capacity(dt_ladder.len());
    let mut means = Vec::with_capacity(dt_ladder.len());
    for (lvl, &dt) in dt_ladder.iter().enumerate() {
        let col: Vec<f64> = ok.iter().map(|(_, errs)| errs[lvl]).collect();
        let s = summarize(&col);
        means.push(s.mean);
        points.push(LadderPoint {
            parameter: dt,
            value: s.mean,
            half_width: s.half_width_95,
            secondary: None,
        });
    }
    let slope = fit_loglog(dt_ladder, &means)?;
    Ok(StudyResult {
        experiment: Experiment::StrongOrder,
        points,
        slope: Some(slope),
        verdict: None,
        n_paths: ens.n_paths,
        per_path: ok
            .into_iter()
            .map(|(path, values)| PathRecord { path, values })
            .collect(),
        failures,
    })
}

fn strictly_decreasing_to(curve: &[f64], factor: f64) -> bool {
    curve.windows(2).all(|w| w[1] < w[0])
        && curve.last().unwrap_or(&f64::NAN) < &(factor * curve.first().unwrap_or(&f64::NAN))
}

/// Arbitration between the two drift-correction conventions.
///
/// Per refinement r the piecewise-linear interpolant of the same Brownian
/// lattice drives a midpoint integrator at dt/r, and the Ito scheme runs at
/// the same dt/r under the half-correction and the full-correction drift.
/// Both are compared at the base recording times. When the Ito scheme
/// carries the convention consistent with the smooth-noise limit the two
/// share a limit path and their gap decays with r; the wrong convention
/// leaves an O(1) solution gap. `per_path` values are (half gap, full gap)
/// pairs per refinement, in ladder order.
pub fn run_wong_zakai(
    problem: &PathProblem,
    ens: &EnsembleConfig,
    refinements: &[usize],
) -> Result<StudyResult> {
    ens.validate()?;
    problem.scheme.validate()?;
    require(refinements.len() >= 3, "refinement ladder needs >= 3 levels")?;
    require(
        problem.scheme.kind != SchemeKind::WongZakaiReference,
        "pick the Ito scheme to arbitrate; the reference integrator is implied",
    )?;
    let r_max = *refinements.last().expect("nonempty");
    for (i, &r) in refinements.iter().enumerate() {
        require(r >= 1, "refinements must be >= 1")?;
        if i > 0 {
            require(r > refinements[i - 1], "refinement ladder must increase")?;
        }
        require(r_max % r == 0, "each refinement must divide the largest")?;
    }
    let dt_base = problem.scheme.dt;
    let n_coarse = problem.scheme.n_steps()?;
    let n_fine = n_coarse * r_max;
    let dt_finest = dt_base / r_max as f64;
    let grid = problem.state0.u.grid();
    let sampler1 = Arc::new(NoiseSampler::new(problem.noise1, grid));
    let sampler2 = Arc::new(NoiseSampler::new(problem.noise2, grid));
    let eff_half = effective_params(
        problem.noise1,
        problem.noise2,
        problem.model.alpha,
        CorrectionConvention::HalfGamma,
    );
    let eff_full = effective_params(
        problem.noise1,
        problem.noise2,
        problem.model.alpha,
        CorrectionConvention::FullGamma,
    );

    let sup_gap = |a: &Trajectory, b: &Trajectory| -> f64 {
        let mut worst = 0.0f64;
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            let mut du = sa.u.clone();
            du.add_scaled(&sb.u, -1.0);
            let mut dv = sa.v.clone();
            dv.add_scaled(&sb.v, -1.0);
            worst = worst.max(du.l2().hypot(dv.l2()));
        }
        worst
    };

    let outcomes = run_pool(ens.n_paths, ens.workers, |i| {
        let mut s1 = GaussianStream::new(StreamKey {
            seed: ens.base_seed,
            stream: 2 * i as u64,
        });
        let mut s2 = GaussianStream::new(StreamKey {
            seed: ens.base_seed,
            stream: 2 * i as u64 + 1,
        });
        let lat1 = Arc::new(BrownianLattice::sample(
            problem.noise1.mode_cutoff(),
            n_fine,
            dt_finest,
            &mut s1,
        ));
        let lat2 = Arc::new(BrownianLattice::sample(
            problem.noise2.mode_cutoff(),
            n_fine,
            dt_finest,
            &mut s2,
        ));
        let mut gaps = Vec::with_capacity(2 * refinements.len());
        for &r in refinements {
            let run = |kind: SchemeKind, eff: &EffectiveParams| -> Result<Trajectory> {
                let cfg = SchemeConfig {
                    kind,
                    dt: dt_base / r as f64,
                    t_end: problem.scheme.t_end,
                    record_every: r,
                };
                let mut noise = LatticeNoise::new(
                    sampler1.clone(),
                    sampler2.clone(),
                    lat1.clone(),
                    lat2.clone(),
                    r_max / r,
                );
                Ok(integrate(
                    problem.state0,
                    problem.model,
                    eff,
                    problem.lyap,
                    &cfg,
                    &mut noise,
                    &mut NoHook,
                    ResumePoint::default(),
                )?
                .trajectory)
            };
            let reference = run(SchemeKind::WongZakaiReference, &eff_half)?;
            let half = run(problem.scheme.kind, &eff_half)?;
            let full = run(problem.scheme.kind, &eff_full)?;
            gaps.push(sup_gap(&reference, &half));
            gaps.push(sup_gap(&reference, &full));
        }
        Ok(gaps)
    })?;
    let (ok, failures) = split_outcomes(outcomes);
    require(!ok.is_empty(), "all paths failed")?;
    let mut points = Vec::with_capacity(refinements.len());
    let mut half_curve = Vec::with_capacity(refinements.len());
    let mut full_curve = Vec::with_capacity(refinements.len());
    for (lvl, &r) in refinements.iter().enumerate() {
        let half: Vec<f64> = ok.iter().map(|(_, g)| g[2 * lvl]).collect();
        let full: Vec<f64> = ok.iter().map(|(_, g)| g[2 * lvl + 1]).collect();
        let sh = summarize(&half);
        let sf = summarize(&full);
        half_curve.push(sh.mean);
        full_curve.push(sf.mean);
        points.push(LadderPoint {
            parameter: r as f64,
            value: sh.mean,
            half_width: sh.half_width_95,
            secondary: Some(sf.mean),
        });
    }
    let half_dec = strictly_decreasing_to(&half_curve, 0.75);
    let full_dec = strictly_decreasing_to(&full_curve, 0.75);
    let verdict = match (half_dec, full_dec) {
        (true, false) => "half_gamma",
        (false, true) => "full_gamma",
        _ => "inconclusive",
    };
    Ok(StudyResult {
        experiment: Experiment::WongZakai,
        points,
        slope: None,
        verdict: Some(verdict.into()),
        n_paths: ens.n_paths,
        per_path: ok
            .into_iter()
            .map(|(path, values)| PathRecord { path, values })
            .collect(),
        failures,
    })
}

/// Stopping-event frequencies across truncation levels.
///
/// Reports the empirical probability that the cumulative stopped time at
/// level m already covers the horizon, which by construction is
/// non-decreasing in m, and the Chebyshev-style companion m * P(early stop),
/// which should stay bounded when the moment bounds hold. `per_path` values
/// are the per-level cumulative stopped times.
pub fn run_truncation_events(
    problem: &PathProblem,
    trunc: &TruncationConfig,
    ens: &EnsembleConfig,
) -> Result<StudyResult> {
    ens.validate()?;
    trunc.validate()?;
    require(trunc.level_max >= 2, "event study needs level_max >= 2")?;
    let grid = problem.state0.u.grid();
    let outcomes = run_pool(ens.n_paths, ens.workers, |i| {
        let mut noise = LiveNoise::for_path(
            problem.noise1,
            problem.noise2,
            grid,
            ens.base_seed,
            i as u64,
        );
        let run = run_concatenated(
            problem.state0,
            problem.model,
            problem.eff,
            problem.lyap,
            problem.scheme,
            trunc,
            &mut noise,
        )?;
        Ok(run
            .events
            .iter()
            .map(|ev| (ev.tau_bar, ev.reached_t))
            .collect::<Vec<_>>())
    })?;
    let (ok, failures) = split_outcomes(outcomes);
    require(!ok.is_empty(), "all paths failed")?;
    let levels = trunc.level_max as usize;
    let mut points = Vec::with_capacity(levels);
    let mut freqs = Vec::with_capacity(levels);
    for lvl in 0..levels {
        let flags: Vec<f64> = ok
            .iter()
            .map(|(_, evs)| if evs[lvl].1 { 1.0 } else { 0.0 })
            .collect();
        let s = summarize(&flags);
        freqs.push(s.mean);
        let m = (lvl + 1) as f64;
        points.push(LadderPoint {
            parameter: m,
            value: s.mean,
            half_width: s.half_width_95,
            secondary: Some(m * (1.0 - s.mean)),
        });
    }
    let monotone = freqs.windows(2).all(|w| w[1] >= w[0]);
    Ok(StudyResult {
        experiment: Experiment::TruncationEvents,
        points,
        slope: None,
        verdict: Some(if monotone { "monotone" } else { "non_monotone" }.into()),
        n_paths: ens.n_paths,
        per_path: ok
            .into_iter()
            .map(|(path, evs)| PathRecord {
                path,
                values: evs.into_iter().map(|(tau_bar, _)| tau_bar).collect(),
            })
            .collect(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use approx::assert_abs_diff_eq;

    fn scalar_problem<'a>(
        state0: &'a State,
        model: &'a ModelParams,
        eff: &'a EffectiveParams,
        lyap: &'a LyapunovParams,
        scheme: &'a SchemeConfig,
        noise1: &'a NoiseSpec,
        noise2: &'a NoiseSpec,
    ) -> PathProblem<'a> {
        PathProblem {
            state0,
            model,
            eff,
            lyap,
            scheme,
            noise1,
            noise2,
        }
    }

    #[test]
    fn summary_of_known_samples() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(s.mean, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.variance, 5.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            s.half_width_95,
            1.96 * (5.0 / 12.0f64).sqrt(),
            epsilon = 1e-15
        );
        let z = summarize(&[7.0; 5]);
        assert_eq!(z.variance, 0.0);
        assert_eq!(z.half_width_95, 0.0);
    }

    #[test]
    fn loglog_fit_recovers_exact_power_laws() {
        let xs = [1.0, 0.5, 0.25, 0.125];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-12);
        assert!(fit.stderr < 1e-12);
        assert!(!fit.degenerate);

        let floor = [1e-16, 1e-16, 1e-16, 1e-16];
        let fit = fit_loglog(&xs, &floor).unwrap();
        assert!(fit.degenerate);
        assert!(fit_loglog(&xs[..2], &ys[..2]).is_err());
    }

    #[test]
    fn zero_noise_ensemble_has_zero_variance() {
        let g = GridSpec::new(16).unwrap();
        let state = State::new(
            Field::from_fn(g, |x| 1.0 + 0.3 * (std::f64::consts::PI * x).cos()),
            Field::zeros(g),
        )
        .unwrap();
        let model = ModelParams::default();
        let off = NoiseSpec::off();
        let eff = effective_params(&off, &off, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let scheme = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.01,
            t_end: 0.1,
            record_every: 10,
        };
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &off, &off);
        let ens = EnsembleConfig {
            n_paths: 8,
            base_seed: 1,
            workers: 2,
            experiment: Experiment::Moments,
        };
        let rep = run_moments(&problem, &ens, 2.0).unwrap();
        assert_eq!(rep.n_failed, 0);
        assert_eq!(rep.sup_l1_u.variance, 0.0);
        assert_eq!(rep.sup_l1_u.half_width_95, 0.0);
        // deterministic value matches a direct single run
        let mut noise = LiveNoise::for_path(&off, &off, g, 1, 0);
        let traj = integrate(
            &state,
            &model,
            &eff,
            &lyap,
            &scheme,
            &mut noise,
            &mut NoHook,
            ResumePoint::default(),
        )
        .unwrap()
        .trajectory;
        let pf = moment_functionals(&traj, 2.0).unwrap();
        assert_eq!(rep.sup_l1_u.mean.to_bits(), pf.sup_l1_u.to_bits());
    }

    #[test]
    fn first_moment_report_equals_identity_power() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let model = ModelParams::default();
        let spec = NoiseSpec::new(1.5, 2, 0.3).unwrap();
        let eff = effective_params(&spec, &spec, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let scheme = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.005,
            t_end: 0.05,
            record_every: 10,
        };
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &spec, &spec);
        let ens = EnsembleConfig {
            n_paths: 12,
            base_seed: 3,
            workers: 1,
            experiment: Experiment::Moments,
        };
        let rep = run_moments(&problem, &ens, 1.0).unwrap();
        assert_eq!(
            rep.sup_l1_u.mean.to_bits(),
            rep.sup_l1_u_pow_p.mean.to_bits()
        );
    }

    #[test]
    fn half_widths_shrink_like_root_m() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::constant(g, 0.2)).unwrap();
        let model = ModelParams::default();
        let spec = NoiseSpec::new(1.5, 2, 0.5).unwrap();
        let eff = effective_params(&spec, &spec, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let scheme = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.005,
            t_end: 0.05,
            record_every: 10,
        };
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &spec, &spec);
        let mut ens = EnsembleConfig {
            n_paths: 160,
            base_seed: 9,
            workers: 2,
            experiment: Experiment::Moments,
        };
        let small = run_moments(&problem, &ens, 1.0).unwrap();
        ens.n_paths = 320;
        let big = run_moments(&problem, &ens, 1.0).unwrap();
        let ratio = big.sup_l1_u.half_width_95 / small.sup_l1_u.half_width_95;
        let ideal = 1.0 / 2.0f64.sqrt();
        assert!(
            (ratio - ideal).abs() < 0.2 * ideal,
            "half-width ratio {ratio} vs {ideal}"
        );
    }

    #[test]
    fn reports_are_bitwise_stable_across_worker_counts() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let model = ModelParams::default();
        let spec = NoiseSpec::new(2.0, 3, 0.4).unwrap();
        let eff = effective_params(&spec, &spec, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let scheme = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.01,
            t_end: 0.05,
            record_every: 5,
        };
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &spec, &spec);
        let mut reports = Vec::new();
        for workers in [1usize, 4, 8] {
            let ens = EnsembleConfig {
                n_paths: 24,
                base_seed: 5,
                workers,
                experiment: Experiment::Moments,
            };
            reports.push(run_moments(&problem, &ens, 2.0).unwrap());
        }
        for r in &reports[1..] {
            assert_eq!(r.sup_l1_u.mean.to_bits(), reports[0].sup_l1_u.mean.to_bits());
            assert_eq!(
                r.int_gradv_h1_sq.mean.to_bits(),
                reports[0].int_gradv_h1_sq.mean.to_bits()
            );
        }
    }

    fn scalar_reduction_setup(
        amplitude: f64,
    ) -> (State, ModelParams, NoiseSpec, NoiseSpec, SchemeConfig) {
        let g = GridSpec::new(4).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let model = ModelParams {
            chi: 0.0,
            beta: 0.0,
            ..ModelParams::default()
        };
        let noise1 = NoiseSpec::new(1.5, 0, amplitude).unwrap();
        let noise2 = NoiseSpec::off();
        let scheme = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 1e-2,
            t_end: 1.0,
            record_every: usize::MAX,
        };
        (state, model, noise1, noise2, scheme)
    }

    #[test]
    fn strong_order_flags_the_noiseless_floor_as_degenerate() {
        let (state, model, noise1, noise2, scheme) = scalar_reduction_setup(0.0);
        let eff = effective_params(&noise1, &noise2, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &noise1, &noise2);
        let ens = EnsembleConfig {
            n_paths: 4,
            base_seed: 2,
            workers: 1,
            experiment: Experiment::StrongOrder,
        };
        let ladder = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        let res = run_strong_order(&problem, &ens, &ladder).unwrap();
        assert!(res.slope.unwrap().degenerate);
        for p in &res.points {
            assert!(p.value < 1e-12, "noiseless error {}", p.value);
        }
    }

    #[test]
    fn strong_order_rejects_non_scalar_setups() {
        let (state, model, noise1, noise2, scheme) = scalar_reduction_setup(1.0);
        let eff = effective_params(&noise1, &noise2, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let bad_model = ModelParams {
            chi: 1.0,
            ..model
        };
        let problem = scalar_problem(&state, &bad_model, &eff, &lyap, &scheme, &noise1, &noise2);
        let ens = EnsembleConfig {
            n_paths: 4,
            base_seed: 2,
            workers: 1,
            experiment: Experiment::StrongOrder,
        };
        let ladder = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        assert!(run_strong_order(&problem, &ens, &ladder).is_err());
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &noise1, &noise2);
        let short = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        assert!(run_strong_order(&problem, &ens, &short).is_err());
    }

    #[test]
    fn strong_order_sees_half_order_with_the_correct_drift() {
        let (state, model, noise1, noise2, scheme) = scalar_reduction_setup(1.0);
        let eff = effective_params(&noise1, &noise2, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &noise1, &noise2);
        let ens = EnsembleConfig {
            n_paths: 48,
            base_seed: 4,
            workers: 2,
            experiment: Experiment::StrongOrder,
        };
        let ladder = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
        let res = run_strong_order(&problem, &ens, &ladder).unwrap();
        let fit = res.slope.unwrap();
        assert!(!fit.degenerate);
        assert!(
            (0.25..=0.8).contains(&fit.slope),
            "slope {} stderr {}",
            fit.slope,
            fit.stderr
        );
        // errors decrease along the ladder
        assert!(res.points.last().unwrap().value < res.points[0].value);
    }

    #[test]
    fn wong_zakai_identifies_the_half_correction() {
        // dt_base must sit low enough that the fixed Ito-scheme error at
        // dt_base stays below the reference's refinement error over the
        // ladder; otherwise the half gap plateaus instead of decaying.
        let (state, model, noise1, noise2, scheme) = scalar_reduction_setup(1.0);
        let scheme = SchemeConfig {
            dt: 1.0 / 64.0,
            ..scheme
        };
        let eff = effective_params(&noise1, &noise2, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &noise1, &noise2);
        let ens = EnsembleConfig {
            n_paths: 64,
            base_seed: 6,
            workers: 2,
            experiment: Experiment::WongZakai,
        };
        let res = run_wong_zakai(&problem, &ens, &[1, 2, 4, 8]).unwrap();
        assert_eq!(res.verdict.as_deref(), Some("half_gamma"));
        let half: Vec<f64> = res.points.iter().map(|p| p.value).collect();
        let full: Vec<f64> = res.points.iter().map(|p| p.secondary.unwrap()).collect();
        assert!(half.last().unwrap() < half.first().unwrap());
        assert!(full.last().unwrap() > &(0.5 * full.first().unwrap()));
    }

    #[test]
    fn truncation_events_cover_both_extremes() {
        let g = GridSpec::new(8).unwrap();
        let state = State::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap();
        let model = ModelParams::default();
        let off = NoiseSpec::off();
        let eff = effective_params(&off, &off, model.alpha, CorrectionConvention::HalfGamma);
        let lyap = LyapunovParams::default();
        let scheme = SchemeConfig {
            kind: SchemeKind::SemiImplicitEm,
            dt: 0.01,
            t_end: 0.05,
            record_every: usize::MAX,
        };
        let problem = scalar_problem(&state, &model, &eff, &lyap, &scheme, &off, &off);
        let ens = EnsembleConfig {
            n_paths: 6,
            base_seed: 8,
            workers: 2,
            experiment: Experiment::TruncationEvents,
        };
        let roomy = TruncationConfig {
            level_max: 3,
            threshold_multiplier: 50.0,
        };
        let res = run_truncation_events(&problem, &roomy, &ens).unwrap();
        for p in &res.points {
            assert_eq!(p.value, 1.0);
            assert_eq!(p.secondary, Some(0.0));
        }
        assert_eq!(res.verdict.as_deref(), Some("monotone"));

        let tight = TruncationConfig {
            level_max: 2,
            threshold_multiplier: 1e-6,
        };
        let res = run_truncation_events(&problem, &tight, &ens).unwrap();
        assert_eq!(res.points[0].value, 0.0);
        assert!(res.points[1].value >= res.points[0].value);
    }
}
