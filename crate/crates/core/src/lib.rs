//! Simulation laboratory for a one-dimensional chemotaxis system with
//! multiplicative space-time noise on a reflecting interval.
//!
//! The model couples a cell density u and a chemical signal v:
//! u diffuses, drifts up the signal gradient, and carries multiplicative
//! noise u dW1; v diffuses, decays, is produced by u, and carries v dW2.
//! Both driving processes are time-homogeneous spatial Wiener fields built
//! from a truncated trigonometric basis with polynomially damped weights.
//!
//! The crate provides, in dependency order:
//!
//! - [`field`]: nodal fields on the interval, integral norms, and the
//!   reflecting-boundary difference operators;
//! - [`spectral`]: cosine transforms and the exact heat semigroup;
//! - [`wiener`]: noise covariance specs, seeded Gaussian streams, spectral
//!   increment sampling, and Brownian lattices for coupled refinements;
//! - [`conversion`]: the Stratonovich-to-Ito drift correction and the
//!   effective coefficients consumed by the steppers;
//! - [`dynamics`]: drift and diffusion operators of the coupled system;
//! - [`integrator`]: semi-implicit and exponential Euler-Maruyama steppers,
//!   a midpoint integrator driven by smoothed noise, and the trajectory
//!   recorder;
//! - [`truncation`]: smooth cutoff attenuation, functional tracking,
//!   stopping detection, and level-concatenated runs;
//! - [`diagnostics`]: entropy, Lyapunov functionals, constraint checks,
//!   positivity and moment reports, and a Holder seminorm probe;
//! - [`harness`]: reproducible Monte Carlo ensembles and study curves;
//! - [`config`] / [`report`]: the TOML run surface and CSV/JSON output.

pub mod config;
pub mod conversion;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod harness;
pub mod integrator;
pub mod report;
pub mod spectral;
pub mod truncation;
pub mod wiener;

mod tridiag;

pub use config::{InitialCondition, RunConfig, StudySection};
pub use conversion::{
    effective_params, stratonovich_correction, CorrectionConvention, EffectiveParams,
};
pub use diagnostics::{
    energy_e, entropy, holder_seminorm, lyapunov_w, moment_functionals, positivity_report,
    validate_constants, ConstraintReport, ConstraintVerdict, LyapunovParams, PathFunctionals,
    PositivityReport,
};
pub use dynamics::{ModelParams, State};
pub use error::{CoreError, Result};
pub use field::{Field, GridSpec, Norm};
pub use harness::{
    run_moments, run_strong_order, run_truncation_events, run_wong_zakai, EnsembleConfig,
    Experiment, MomentReport, PathProblem, StudyResult, Summary,
};
pub use integrator::{
    integrate, NoHook, Regime, ResumePoint, SchemeConfig, SchemeKind, StepHook, Trajectory,
    BLOWUP_LIMIT,
};
pub use spectral::{apply_heat_semigroup, CosineTransform};
pub use truncation::{
    run_concatenated, ConcatenatedRun, CutoffSpec, LevelEvent, TriggerKind, TruncationConfig,
    TruncationHook,
};
pub use wiener::{
    hs_admissibility, BrownianLattice, GaussianStream, LatticeNoise, LiveNoise, NoiseIncrement,
    NoiseSampler, NoiseSource, NoiseSpec, RegularityTarget, StreamKey,
};
