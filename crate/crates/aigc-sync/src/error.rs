use std::path::PathBuf;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value outside its documented domain (non-positive scale, bad index, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: requested {requested:.3e}, achieved {achieved:.3e}")]
    QuadratureNonConvergence { requested: f64, achieved: f64 },

    /// The permutation-sum likelihood grows as N! and is capped.
    #[error("permutation likelihood supports at most {max} arrivals, got {n}")]
    ComplexityExceeded { n: usize, max: usize },

    /// Every candidate offset in the search interval has zero likelihood.
    #[error("likelihood is zero over the whole search interval [{lo}, {hi}]")]
    InfeasibleInterval { lo: f64, hi: f64 },

    /// A covariance matrix could not be factored even after the ridge policy.
    #[error("covariance matrix is singular or badly conditioned: {0}")]
    IllConditioned(String),

    /// Mismatched vector/matrix dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An estimator cannot run under the given experiment configuration.
    #[error("estimator {estimator} incompatible with configuration: {reason}")]
    Incompatible { estimator: String, reason: String },

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// File I/O failure, with the path that caused it.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code for CLI error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
            Error::ComplexityExceeded { .. } => "complexity_exceeded",
            Error::InfeasibleInterval { .. } => "infeasible_interval",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Incompatible { .. } => "incompatible_estimator",
            Error::Config(_) => "config_error",
            Error::Io { .. } => "io_error",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        assert_eq!(Error::InvalidParameter("x".into()).code(), "invalid_parameter");
        assert_eq!(
            Error::ComplexityExceeded { n: 9, max: 8 }.code(),
            "complexity_exceeded"
        );
    }

    #[test]
    fn display_includes_context() {
        let e = Error::QuadratureNonConvergence { requested: 1e-10, achieved: 2e-7 };
        let msg = e.to_string();
        assert!(msg.contains("1.000e-10") && msg.contains("2.000e-7"));
    }
}
