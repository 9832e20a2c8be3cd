use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("state-evolution maps are undefined at the origin (alpha = 0, sigma2 = 0)")]
    OriginState,
    #[error("bisection bracket [{lo}, {hi}] does not contain a sign change: {what}")]
    NoBracket { what: &'static str, lo: f64, hi: f64 },
    #[error("no convergence after {iters} iterations: {what}")]
    NoConvergence { what: &'static str, iters: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("divergence estimate breakdown: -div = {0} is not positive")]
    DivergenceBreakdown(f64),
    #[error("pole crossed: {0}")]
    Pole(String),
    #[error("success verdict does not flip on [{lo}, {hi}]")]
    NoFlip { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}
