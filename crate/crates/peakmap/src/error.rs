use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fails its domain check (non-finite, out of range, bad simplex).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A tau value lies beyond the final size of the epidemic, where the
    /// analytic prevalence is negative.
    #[error("tau {tau} exceeds the final-size limit {max}")]
    TauOutOfRange { tau: f64, max: f64 },

    /// The quadrature integrand left its valid domain (prevalence denominator
    /// crossed zero inside the integration interval).
    #[error("quadrature domain error: {0}")]
    QuadratureDomain(String),

    /// Adaptive quadrature exhausted its subdivision budget before reaching the
    /// requested tolerance.
    #[error("quadrature did not converge: {0}")]
    QuadratureBudget(String),

    /// A bracketed root search was handed an interval that does not bracket a
    /// sign change, or failed to tighten it.
    #[error("root finding failed: {0}")]
    RootBracket(String),

    /// The outer inverse solver exhausted every start without reaching the
    /// residual tolerance. Carries the best residuals seen for diagnostics.
    #[error("inverse solver did not converge: best residuals piv={residual_piv:.3e}, pit={residual_pit:.3e}")]
    NoConvergence { residual_piv: f64, residual_pit: f64 },

    /// The requested peak pair is unattainable for the given initial conditions.
    #[error("infeasible target: {0}")]
    Infeasible(String),

    /// Rejection sampling accepted too small a fraction of proposals.
    #[error("rejection sampling acceptance rate {rate:.3e} below minimum {min:.1e}")]
    RejectionRate { rate: f64, min: f64 },

    /// MCMC could not be initialized at a point of finite posterior density.
    #[error("MCMC initialization failed: {0}")]
    McmcInit(String),

    /// A season window is missing expected epidemiological weeks.
    #[error("missing weeks in season window: {0:?}")]
    MissingWeeks(Vec<u32>),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
