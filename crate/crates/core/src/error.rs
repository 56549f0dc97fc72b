use thiserror::Error;

/// Unified error type for the whole pipeline.
///
/// Variants split into two broad groups: rejected input (dimensions, domains,
/// inconsistent declarations) and genuine numerical trouble (iteration caps,
/// singular operators). The CLI maps the former to exit code 2 and the latter
/// to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix not symmetric: {0}")]
    NotSymmetric(String),

    #[error("matrix not positive definite: pivot {pivot:.3e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("Lyapunov equation has no unique solution (spectral condition violated)")]
    SingularLyapunov,

    #[error("eigenvalue iteration failed to converge after {sweeps} sweeps on a {dim}x{dim} matrix")]
    EigenFailure { dim: usize, sweeps: usize },

    #[error("synthesis unavailable: {0}")]
    SynthesisUnavailable(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("inconsistent density bundle: {0}")]
    InconsistentBundle(String),

    #[error("density diverges: {0}")]
    DivergentDensity(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("generator produces fewer than two switches on the requested horizon")]
    InsufficientSwitches,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

impl Error {
    /// True for errors caused by bad or rejected input rather than by a
    /// numerical method giving up.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::SingularLyapunov | Error::EigenFailure { .. } | Error::NumericalFailure(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
