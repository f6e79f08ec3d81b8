//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by numerics, sampling, solvers, and scenario evaluation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A matrix supplied as Hermitian deviates from its conjugate transpose.
    #[error("matrix is not Hermitian (max entry deviation {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },

    /// Eigenvalue below the PSD tolerance where a nonnegative-definite
    /// matrix was required.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    /// Cholesky (or eigenvalue fallback) found a non-positive pivot where a
    /// positive-definite matrix was required.
    #[error("matrix is not positive definite{}", context_suffix(.context))]
    NotPd { context: Option<String> },

    /// The Gram matrix of a Gaussian block was numerically singular even
    /// after resampling.
    #[error("Gram matrix numerically singular after {attempts} sampling attempts")]
    SingularGram { attempts: usize },

    /// Quadrature produced a correlation matrix with an eigenvalue too far
    /// below zero to clamp; the node count does not resolve the integrand.
    #[error("correlation quadrature not resolved (min eigenvalue {min_eig:.3e})")]
    QuadratureDivergence { min_eig: f64 },

    /// A user requests more streams than transmit antennas.
    #[error("user {user}: stream count {streams} exceeds transmit antennas {tx}")]
    InvalidLoadFactor {
        user: usize,
        streams: usize,
        tx: usize,
    },

    /// Fixed-point iteration exhausted its iteration budget.
    #[error("fixed point did not converge within {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },

    /// Noise variance must be strictly positive.
    #[error("noise variance must be positive, got {0}")]
    InvalidNoise(f64),

    /// Full-stream users (n = N) are only supported with uniform power.
    #[error("user {user}: full-stream configuration requires a uniform power loading")]
    UnsupportedFullStream { user: usize },

    /// Operand shapes are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A Monte Carlo replication failed; carries the failing index.
    #[error("replication {replication} failed: {source}")]
    ReplicationFailed {
        replication: u64,
        #[source]
        source: Box<Error>,
    },
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn not_pd(context: impl Into<String>) -> Self {
        Error::NotPd {
            context: Some(context.into()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
