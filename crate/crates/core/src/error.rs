use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// No sign change was found, even after expanding the bracket.
    #[error("no root in bracket [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoRoot { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    /// A least-squares design without enough distinct abscissae.
    #[error("degenerate design: {0}")]
    Degenerate(String),

    /// Cholesky factorization failed (matrix not positive definite).
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// The implicit equation has no real solution in the admissible region.
    #[error("outside the solvable domain: {0}")]
    Domain(String),

    /// Too many trials of a campaign had a non-converged solve.
    #[error("campaign failed: {unconverged} of {trials} trials had unconverged solves")]
    Campaign { unconverged: usize, trials: usize },

    #[error("at rho = {rho}: {source}")]
    AtRho { rho: f64, source: Box<Error> },

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
