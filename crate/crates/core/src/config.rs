//! Run configuration: TOML surface, validation, and assembly of the typed
//! pieces the solvers consume.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::conversion::{effective_params, CorrectionConvention, EffectiveParams};
use crate::diagnostics::LyapunovParams;
use crate::dynamics::{ModelParams, State};
use crate::error::{CoreError, Result};
use crate::field::{Field, GridSpec};
use crate::harness::{EnsembleConfig, Experiment};
use crate::integrator::{SchemeConfig, SchemeKind};
use crate::truncation::TruncationConfig;
use crate::wiener::NoiseSpec;

fn default_one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n_cells: usize,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    delta: f64,
    #[serde(rename = "K")]
    mode_cutoff: i64,
    amplitude: f64,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeSection {
    kind: SchemeKind,
    dt: f64,
    t_end: f64,
    #[serde(default = "default_one")]
    record_every: usize,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_paths: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_one")]
    pub workers: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            n_paths: 1,
            base_seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: PathBuf,
}

/// Cosine-profile initial data: mean + amplitude * cos(mode * pi * x) per
/// component. The profile respects the reflecting boundaries for any mode.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    pub u_mean: f64,
    pub u_cos_amplitude: f64,
    pub u_cos_mode: u32,
    pub v_mean: f64,
    pub v_cos_amplitude: f64,
    pub v_cos_mode: u32,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition {
            u_mean: 1.0,
            u_cos_amplitude: 0.0,
            u_cos_mode: 1,
            v_mean: 0.0,
            v_cos_amplitude: 0.0,
            v_cos_mode: 1,
        }
    }
}

impl InitialCondition {
    pub fn build(&self, grid: GridSpec) -> Result<State> {
        let profile = |mean: f64, amp: f64, mode: u32| {
            Field::from_fn(grid, |x| {
                mean + amp * (mode as f64 * std::f64::consts::PI * x).cos()
            })
        };
        let u = profile(self.u_mean, self.u_cos_amplitude, self.u_cos_mode);
        if u.min_value() < 0.0 {
            return Err(CoreError::Config(format!(
                "initial density dips to {}; it must be nonnegative",
                u.min_value()
            )));
        }
        let v = profile(self.v_mean, self.v_cos_amplitude, self.v_cos_mode);
        State::new(u, v)
    }
}

/// Ladders and exponents for the study subcommands.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub dt_ladder: Option<Vec<f64>>,
    pub refinement_ladder: Option<Vec<usize>>,
    pub moment_p: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: GridSection,
    #[serde(default)]
    model: ModelParams,
    noise1: Option<NoiseSection>,
    noise2: Option<NoiseSection>,
    scheme: SchemeSection,
    #[serde(default)]
    correction_convention: CorrectionConvention,
    truncation: Option<TruncationConfig>,
    #[serde(default)]
    lyapunov: LyapunovParams,
    #[serde(default)]
    ensemble: EnsembleSection,
    output: Option<OutputSection>,
    #[serde(default)]
    initial: InitialCondition,
    #[serde(default)]
    study: StudySection,
}

/// A parsed and validated run description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelParams,
    pub noise1: NoiseSpec,
    pub noise2: NoiseSpec,
    pub scheme: SchemeConfig,
    pub convention: CorrectionConvention,
    pub truncation: Option<TruncationConfig>,
    pub lyapunov: LyapunovParams,
    pub ensemble: EnsembleSection,
    pub output_dir: PathBuf,
    pub initial: InitialCondition,
    pub study: StudySection,
}

fn config_err<E: std::fmt::Display>(e: E) -> CoreError {
    CoreError::Config(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(config_err)?;
        let grid = GridSpec::new(raw.grid.n_cells)?;
        raw.model.validate()?;
        let noise = |s: &Option<NoiseSection>| -> Result<NoiseSpec> {
            match s {
                Some(n) => NoiseSpec::new(n.delta, n.mode_cutoff, n.amplitude),
                None => Ok(NoiseSpec::off()),
            }
        };
        let noise1 = noise(&raw.noise1)?;
        let noise2 = noise(&raw.noise2)?;
        let scheme = SchemeConfig {
            kind: raw.scheme.kind,
            dt: raw.scheme.dt,
            t_end: raw.scheme.t_end,
            record_every: raw.scheme.record_every,
        };
        scheme.validate()?;
        if let Some(t) = &raw.truncation {
            t.validate()?;
        }
        raw.lyapunov.validate()?;
        let ensemble = raw.ensemble;
        if ensemble.n_paths == 0 {
            return Err(CoreError::Config("ensemble.n_paths must be >= 1".into()));
        }
        if ensemble.workers == 0 {
            return Err(CoreError::Config("ensemble.workers must be >= 1".into()));
        }
        if let Some(ladder) = &raw.study.dt_ladder {
            if ladder.iter().any(|&dt| !(dt > 0.0 && dt.is_finite())) {
                return Err(CoreError::Config("study.dt_ladder entries must be positive".into()));
            }
        }
        if let Some(p) = raw.study.moment_p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(CoreError::Config(format!("study.moment_p must be >= 1, got {p}")));
            }
        }
        let cfg = RunConfig {
            grid,
            model: raw.model,
            noise1,
            noise2,
            scheme,
            convention: raw.correction_convention,
            truncation: raw.truncation,
            lyapunov: raw.lyapunov,
            ensemble,
            output_dir: raw
                .output
                .map(|o| o.dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            initial: raw.initial,
            study: raw.study,
        };
        cfg.initial.build(cfg.grid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CoreError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn initial_state(&self) -> Result<State> {
        self.initial.build(self.grid)
    }

    pub fn effective(&self) -> EffectiveParams {
        effective_params(&self.noise1, &self.noise2, self.model.alpha, self.convention)
    }

    pub fn ensemble(&self, experiment: Experiment) -> EnsembleConfig {
        EnsembleConfig {
            n_paths: self.ensemble.n_paths,
            base_seed: self.ensemble.base_seed,
            workers: self.ensemble.workers,
            experiment,
        }
    }

    /// Strong-order ladder; defaults to four halvings of the scheme dt.
    pub fn dt_ladder(&self) -> Vec<f64> {
        self.study.dt_ladder.clone().unwrap_or_else(|| {
            (0..4).map(|k| self.scheme.dt / (1u32 << k) as f64).collect()
        })
    }

    pub fn refinement_ladder(&self) -> Vec<usize> {
        self.study
            .refinement_ladder
            .clone()
            .unwrap_or_else(|| vec![1, 2, 4, 8])
    }

    pub fn moment_p(&self) -> f64 {
        self.study.moment_p.unwrap_or(2.0)
    }

    pub fn require_truncation(&self) -> Result<&TruncationConfig> {
        self.truncation
            .as_ref()
            .ok_or_else(|| CoreError::Config("a [truncation] section is required".into()))
    }
}
