//! Error type shared by every module.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument that must be finite was not.
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: String },

    /// Invalid construction parameters (bad config values).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A documented operation precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A root could not be bracketed on the search interval.
    #[error("root not bracketed: {0}")]
    RootNotBracketed(String),

    /// An iterative solver ran out of iterations.
    #[error("solver did not converge: {0}")]
    SolverFailed(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Two pattern laws cover different lag windows.
    #[error("lag window mismatch: {0}")]
    WindowMismatch(String),

    /// Rejection sampling produced no accepted draw within the budget.
    #[error("event too rare for rejection sampling ({0}); use the tilted estimator")]
    RejectionExhausted(String),

    /// Importance sampling placed no weight on the conditioning event.
    #[error("no accepted mass under the tilt ({0}); increase n_samples")]
    NoAcceptedMass(String),

    #[error("quadrature did not converge: achieved tolerance {achieved:e}, requested {requested:e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    /// Exact total-variation over binary patterns is limited to 12 lags.
    #[error("pattern space too large: {0} lags exceeds the exact-TV limit of 12")]
    PatternSpaceTooLarge(usize),

    /// A registered functional produced a value above its declared bound.
    #[error("functional bound exceeded: {0}")]
    FunctionalBoundExceeded(String),

    /// The supplied derivative is not strictly increasing on the bracket.
    #[error("non-monotone derivative on bracket: {0}")]
    NonMonotoneDerivative(String),
}

impl Error {
    /// True for errors caused by invalid inputs or configuration rather
    /// than by numerical failure. The CLI maps these to exit code 2 and the
    /// rest to exit code 3.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::InvalidParameter(_)
                | Error::Precondition(_)
                | Error::EmptyInput(_)
                | Error::LengthMismatch(_)
                | Error::WindowMismatch(_)
                | Error::PatternSpaceTooLarge(_)
        )
    }
}
