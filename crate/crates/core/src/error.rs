use thiserror::Error;

/// Everything that can go wrong below the CLI layer.
///
/// `Config` marks bad inputs (rejected before any stepping), the rest are
/// runtime failures that abort a trajectory but are reported as data by the
/// ensemble harness rather than tearing the whole run down.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("{quantity} became non-finite at step {step} (t = {time:.6})")]
    NonFinite {
        quantity: &'static str,
        step: usize,
        time: f64,
    },

    #[error("density has entries below tolerance: min {min:.3e} at x = {location:.6}")]
    NegativeDensity { min: f64, location: f64 },

    #[error("tridiagonal solve broke down at row {row} (pivot {pivot:.3e})")]
    SolveBreakdown { row: usize, pivot: f64 },

    #[error("solution magnitude exceeded {limit:.1e} at step {step}; reduce dt or refine the noise mesh")]
    Blowup { step: usize, limit: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error("truncation level {level}: {source}")]
    AtLevel {
        level: u32,
        #[source]
        source: Box<CoreError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl CoreError {
    /// Attach truncation-level context without losing the inner kind.
    pub fn at_level(self, level: u32) -> Self {
        CoreError::AtLevel {
            level,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping any context layers.
    pub fn root(&self) -> &CoreError {
        match self {
            CoreError::AtLevel { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
