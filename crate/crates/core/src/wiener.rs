//! Spatially colored Wiener processes and their reproducible sampling.
//!
//! The noise is a mode sum W(t, x) = sum_{|k| <= K} lambda_k psi_k(x) beta_k(t)
//! over the trigonometric orthonormal system on [0, 1]
//!   psi_0 = 1, psi_k = sqrt(2) sin(2 pi k x) (k > 0),
//!   psi_k = sqrt(2) cos(2 pi |k| x) (k < 0),
//! with polynomially damped weights lambda_k. Because paired modes satisfy
//! psi_k^2 + psi_{-k}^2 = 2, the pointwise variance rate
//! sum lambda_k^2 psi_k(x)^2 equals the modal mass gamma = sum lambda_k^2 at
//! every x, a fact the Ito correction machinery relies on and tests pin down.
//!
//! Sampling is ChaCha-based and stream-addressed: one (seed, stream) pair per
//! Wiener process per trajectory, with exactly 2K+1 standard normals consumed
//! per increment in ascending mode order. That pinned draw order is what lets
//! refinement studies couple paths across dt by summing fine increments.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::field::{Field, GridSpec};

/// Trigonometric mode k evaluated at x (orthonormal in L2[0,1]).
pub fn mode(k: i64, x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    if k == 0 {
        1.0
    } else if k > 0 {
        std::f64::consts::SQRT_2 * (two_pi * k as f64 * x).sin()
    } else {
        std::f64::consts::SQRT_2 * (two_pi * (-k) as f64 * x).cos()
    }
}

/// Mode-truncated covariance description of one Wiener process.
#[derive(Clone, Debug, Serialize)]
pub struct NoiseSpec {
    delta: f64,
    mode_cutoff: i64,
    amplitude: f64,
    #[serde(skip)]
    lambdas: Vec<f64>,
    gamma: f64,
}

impl NoiseSpec {
    /// Weights lambda_k = amplitude * (1 + (2 pi k)^2)^(-delta/2) for |k| <= K.
    pub fn new(delta: f64, mode_cutoff: i64, amplitude: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CoreError::Config(format!(
                "noise regularity exponent must be positive, got {delta}"
            )));
        }
        if mode_cutoff < 0 {
            return Err(CoreError::Config(format!(
                "mode cutoff must be >= 0, got {mode_cutoff}"
            )));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(CoreError::Config(format!(
                "noise amplitude must be finite and >= 0, got {amplitude}"
            )));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let lambdas: Vec<f64> = (-mode_cutoff..=mode_cutoff)
            .map(|k| {
                let w = two_pi * k as f64;
                amplitude * (1.0 + w * w).powf(-delta / 2.0)
            })
            .collect();
        let gamma = lambdas.iter().map(|l| l * l).sum();
        Ok(NoiseSpec {
            delta,
            mode_cutoff,
            amplitude,
            lambdas,
            gamma,
        })
    }

    /// A spec that produces identically zero increments (draws still occur).
    pub fn off() -> Self {
        NoiseSpec::new(1.0, 0, 0.0).expect("static spec is valid")
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mode_cutoff(&self) -> i64 {
        self.mode_cutoff
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn lambda(&self, k: i64) -> f64 {
        assert!(k.abs() <= self.mode_cutoff, "mode {k} outside cutoff");
        self.lambdas[(k + self.mode_cutoff) as usize]
    }

    /// Modal mass gamma = sum of lambda_k^2; equals the pointwise variance
    /// rate of the mode sum at every x.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }
}

/// Which function space the rolling noise should be compatible with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RegularityTarget {
    L2,
    H1,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub target: RegularityTarget,
    pub required_exponent: f64,
    pub delta: f64,
    pub admissible: bool,
    /// Integral-comparison upper bound on the modal mass dropped by the
    /// cutoff, sum_{|k| > K} lambda_k^2. Infinite when delta <= 1/2 (the full
    /// series would not even be summable).
    pub discarded_mass_bound: f64,
    pub kept_mass: f64,
}

/// Check whether the damping exponent clears the threshold for the target
/// space (> 1 for L2, > 2 for H1) and bound the truncated tail mass.
pub fn hs_admissibility(spec: &NoiseSpec, target: RegularityTarget) -> AdmissibilityReport {
    let required_exponent = match target {
        RegularityTarget::L2 => 1.0,
        RegularityTarget::H1 => 2.0,
    };
    let delta = spec.delta();
    let amp2 = spec.amplitude() * spec.amplitude();
    let discarded_mass_bound = if amp2 == 0.0 {
        0.0
    } else if delta <= 0.5 {
        f64::INFINITY
    } else {
        // 2 * amp^2 * int_K^inf (1 + (2 pi x)^2)^(-delta) dx, bounded via
        // (1+y^2)^(-delta) <= min(1, y^(-2 delta)) after y = 2 pi x.
        let two_pi = 2.0 * std::f64::consts::PI;
        let k = spec.mode_cutoff() as f64;
        let lower = two_pi * k;
        let int = if lower >= 1.0 {
            lower.powf(1.0 - 2.0 * delta) / (2.0 * delta - 1.0)
        } else {
            (1.0 - lower) + 1.0 / (2.0 * delta - 1.0)
        };
        2.0 * amp2 * int / two_pi
    };
    AdmissibilityReport {
        target,
        required_exponent,
        delta,
        admissible: delta > required_exponent,
        discarded_mass_bound,
        kept_mass: spec.gamma(),
    }
}

/// Address of one Gaussian draw sequence: a base seed plus a stream index.
/// Identical keys reproduce identical draws on every platform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

/// Sequential standard-normal source backed by ChaCha12.
#[derive(Clone)]
pub struct GaussianStream {
    rng: ChaCha12Rng,
}

impl GaussianStream {
    pub fn new(key: StreamKey) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(key.seed);
        rng.set_stream(key.stream);
        GaussianStream { rng }
    }

    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// One Wiener increment over a step of length `dt`, evaluated at the nodes.
#[derive(Clone, Debug)]
pub struct NoiseIncrement {
    pub field: Field,
    pub dt: f64,
}

/// Node-evaluated mode table for fast increment synthesis.
///
/// Row k holds lambda_k * psi_k(x_j); an increment is the table contracted
/// against 2K+1 fresh normals scaled by sqrt(dt).
pub struct NoiseSampler {
    spec: NoiseSpec,
    grid: GridSpec,
    table: Vec<f64>,
}

impl NoiseSampler {
    pub fn new(spec: &NoiseSpec, grid: GridSpec) -> Self {
        let nn = grid.n_nodes();
        let k_max = spec.mode_cutoff();
        let mut table = vec![0.0; spec.n_modes() * nn];
        for (row, k) in (-k_max..=k_max).enumerate() {
            let lam = spec.lambda(k);
            for j in 0..nn {
                table[row * nn + j] = lam * mode(k, grid.node(j));
            }
        }
        NoiseSampler {
            spec: spec.clone(),
            grid,
            table,
        }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Draw one increment, consuming exactly 2K+1 normals in ascending k.
    pub fn sample(&self, dt: f64, stream: &mut GaussianStream) -> NoiseIncrement {
        let nn = self.grid.n_nodes();
        let sqrt_dt = dt.sqrt();
        let mut values = vec![0.0; nn];
        for row in 0..self.spec.n_modes() {
            let c = stream.next_normal() * sqrt_dt;
            let tab = &self.table[row * nn..(row + 1) * nn];
            for j in 0..nn {
                values[j] += c * tab[j];
            }
        }
        NoiseIncrement {
            field: Field::from_values(self.grid, values).expect("length matches grid"),
            dt,
        }
    }

    /// Synthesize an increment from externally supplied per-mode Brownian
    /// increments (ascending k). Used to aggregate lattice draws.
    pub fn synthesize(&self, coeff_increments: &[f64], dt: f64) -> NoiseIncrement {
        assert_eq!(coeff_increments.len(), self.spec.n_modes());
        let nn = self.grid.n_nodes();
        let mut values = vec![0.0; nn];
        for (row, &c) in coeff_increments.iter().enumerate() {
            let tab = &self.table[row * nn..(row + 1) * nn];
            for j in 0..nn {
                values[j] += c * tab[j];
            }
        }
        NoiseIncrement {
            field: Field::from_values(self.grid, values).expect("length matches grid"),
            dt,
        }
    }

    /// sum_k (lambda_k psi_k(x_j))^2 at node j; constant in j by mode pairing.
    pub fn nodal_variance_rate(&self, j: usize) -> f64 {
        let nn = self.grid.n_nodes();
        (0..self.spec.n_modes())
            .map(|row| {
                let t = self.table[row * nn + j];
                t * t
            })
            .sum()
    }
}

/// Convenience one-shot sampler for tests and small tools.
pub fn sample_increment(
    spec: &NoiseSpec,
    grid: GridSpec,
    dt: f64,
    stream: &mut GaussianStream,
) -> NoiseIncrement {
    NoiseSampler::new(spec, grid).sample(dt, stream)
}

/// Per-mode Brownian increments on a uniform fine mesh.
///
/// The lattice stores raw coefficient increments d beta_k over each fine cell
/// (already scaled by sqrt(dt_fine)), drawn step-major and mode-ascending so
/// that aggregating r cells reproduces bit for bit what live sampling at
/// dt = r * dt_fine would have produced from the same stream position.
#[derive(Clone, Debug)]
pub struct BrownianLattice {
    n_modes: usize,
    n_steps: usize,
    dt_fine: f64,
    /// increments[m * n_modes + row]: step-major layout.
    increments: Vec<f64>,
}

impl BrownianLattice {
    pub fn sample(
        mode_cutoff: i64,
        n_steps: usize,
        dt_fine: f64,
        stream: &mut GaussianStream,
    ) -> Self {
        let n_modes = (2 * mode_cutoff + 1) as usize;
        let sqrt_dt = dt_fine.sqrt();
        let mut increments = vec![0.0; n_modes * n_steps];
        for m in 0..n_steps {
            for row in 0..n_modes {
                increments[m * n_modes + row] = stream.next_normal() * sqrt_dt;
            }
        }
        BrownianLattice {
            n_modes,
            n_steps,
            dt_fine,
            increments,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    /// Sum of the increments of mode row `row` over fine cells [m0, m1).
    fn coeff_window(&self, row: usize, m0: usize, m1: usize) -> f64 {
        let mut acc = 0.0;
        for m in m0..m1 {
            acc += self.increments[m * self.n_modes + row];
        }
        acc
    }

    /// All-mode window sums, ascending k.
    pub fn window(&self, m0: usize, m1: usize) -> Vec<f64> {
        (0..self.n_modes)
            .map(|row| self.coeff_window(row, m0, m1))
            .collect()
    }

    /// Piecewise-linear interpolant value of coefficient path k at time t
    /// (k indexed by row = k + K).
    pub fn path_value(&self, row: usize, t: f64) -> f64 {
        let s = (t / self.dt_fine).clamp(0.0, self.n_steps as f64);
        let cell = (s.floor() as usize).min(self.n_steps.saturating_sub(1));
        let base = self.coeff_window(row, 0, cell);
        base + (s - cell as f64) * self.increments[cell * self.n_modes + row]
    }

    /// Quadratic variation of one coefficient path over the whole mesh.
    pub fn quadratic_variation(&self, row: usize) -> f64 {
        (0..self.n_steps)
            .map(|m| {
                let d = self.increments[m * self.n_modes + row];
                d * d
            })
            .sum()
    }

    /// Per-mode slopes on fine cell m (constant on the cell).
    pub fn slopes(&self, m: usize) -> Vec<f64> {
        (0..self.n_modes)
            .map(|row| self.increments[m * self.n_modes + row] / self.dt_fine)
            .collect()
    }
}

/// Supplies the pair of Wiener increments that drives one step.
///
/// `fork` clones the current stream position: after a fork, source and clone
/// emit identical subsequent draws, which is exactly the single-probability-
/// space reading of restarting the noise at a stopping time.
pub trait NoiseSource {
    fn grid(&self) -> GridSpec;
    fn next_pair(&mut self, dt: f64) -> (NoiseIncrement, NoiseIncrement);
    fn fork(&self) -> Box<dyn NoiseSource>;
}

/// Fresh draws from two dedicated streams, one per Wiener process.
pub struct LiveNoise {
    sampler1: Arc<NoiseSampler>,
    sampler2: Arc<NoiseSampler>,
    stream1: GaussianStream,
    stream2: GaussianStream,
}

impl LiveNoise {
    pub fn new(
        spec1: &NoiseSpec,
        spec2: &NoiseSpec,
        grid: GridSpec,
        key1: StreamKey,
        key2: StreamKey,
    ) -> Self {
        LiveNoise {
            sampler1: Arc::new(NoiseSampler::new(spec1, grid)),
            sampler2: Arc::new(NoiseSampler::new(spec2, grid)),
            stream1: GaussianStream::new(key1),
            stream2: GaussianStream::new(key2),
        }
    }

    /// Stream layout used everywhere: trajectory i draws its two Wiener
    /// processes from streams 2i and 2i+1 of the base seed.
    pub fn for_path(
        spec1: &NoiseSpec,
        spec2: &NoiseSpec,
        grid: GridSpec,
        base_seed: u64,
        path_index: u64,
    ) -> Self {
        let key1 = StreamKey {
            seed: base_seed,
            stream: 2 * path_index,
        };
        let key2 = StreamKey {
            seed: base_seed,
            stream: 2 * path_index + 1,
        };
        LiveNoise::new(spec1, spec2, grid, key1, key2)
    }
}

impl NoiseSource for LiveNoise {
    fn grid(&self) -> GridSpec {
        self.sampler1.grid()
    }

    fn next_pair(&mut self, dt: f64) -> (NoiseIncrement, NoiseIncrement) {
        (
            self.sampler1.sample(dt, &mut self.stream1),
            self.sampler2.sample(dt, &mut self.stream2),
        )
    }

    fn fork(&self) -> Box<dyn NoiseSource> {
        Box::new(LiveNoise {
            sampler1: self.sampler1.clone(),
            sampler2: self.sampler2.clone(),
            stream1: self.stream1.clone(),
            stream2: self.stream2.clone(),
        })
    }
}

/// Replays pre-drawn lattices, aggregating `aggregate` fine cells per step.
/// Coupled-refinement studies run the same lattice at several aggregation
/// factors so every dt level sees the same Brownian path.
pub struct LatticeNoise {
    sampler1: Arc<NoiseSampler>,
    sampler2: Arc<NoiseSampler>,
    lattice1: Arc<BrownianLattice>,
    lattice2: Arc<BrownianLattice>,
    aggregate: usize,
    cursor: usize,
}

impl LatticeNoise {
    pub fn new(
        sampler1: Arc<NoiseSampler>,
        sampler2: Arc<NoiseSampler>,
        lattice1: Arc<BrownianLattice>,
        lattice2: Arc<BrownianLattice>,
        aggregate: usize,
    ) -> Self {
        assert!(aggregate >= 1);
        assert_eq!(lattice1.n_steps() % aggregate, 0, "aggregation must tile the lattice");
        assert_eq!(lattice2.n_steps() % aggregate, 0, "aggregation must tile the lattice");
        LatticeNoise {
            sampler1,
            sampler2,
            lattice1,
            lattice2,
            aggregate,
            cursor: 0,
        }
    }
}

impl NoiseSource for LatticeNoise {
    fn grid(&self) -> GridSpec {
        self.sampler1.grid()
    }

    fn next_pair(&mut self, dt: f64) -> (NoiseIncrement, NoiseIncrement) {
        let m0 = self.cursor * self.aggregate;
        let m1 = m0 + self.aggregate;
        assert!(
            m1 <= self.lattice1.n_steps(),
            "lattice exhausted at coarse step {}",
            self.cursor
        );
        let expected = self.lattice1.dt_fine() * self.aggregate as f64;
        debug_assert!(
            (dt - expected).abs() <= 1e-12 * expected.max(1e-300),
            "caller dt {dt} does not match lattice aggregation {expected}"
        );
        self.cursor += 1;
        let w1 = self.sampler1.synthesize(&self.lattice1.window(m0, m1), dt);
        let w2 = self.sampler2.synthesize(&self.lattice2.window(m0, m1), dt);
        (w1, w2)
    }

    fn fork(&self) -> Box<dyn NoiseSource> {
        Box::new(LatticeNoise {
            sampler1: self.sampler1.clone(),
            sampler2: self.sampler2.clone(),
            lattice1: self.lattice1.clone(),
            lattice2: self.lattice2.clone(),
            aggregate: self.aggregate,
            cursor: self.cursor,
        })
    }
}
