use thiserror::Error;

pub type Result<T> = std::result::Result<T, CatcherError>;

#[derive(Debug, Error)]
pub enum CatcherError {
    /// A value lies outside the domain of the operation it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible protocol: {0}")]
    Infeasible(String),

    #[error("uncertainty relation violated: dx*dv = {product:.6e} < 1/(2 mu) = {bound:.6e}")]
    UncertaintyViolation { product: f64, bound: f64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("grid does not resolve the wave: {0}")]
    UnderResolved(String),

    /// The wave function reached the edge of the computational grid.
    #[error("leakage at t = {t:.6e} s: |psi| at the {edge} edge is {ratio:.3e} of the peak")]
    Leakage { t: f64, edge: &'static str, ratio: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CatcherError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CatcherError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CatcherError::param(name, format!("must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CatcherError::param(name, format!("must be > 0, got {value}")))
    }
}
