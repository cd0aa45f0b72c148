use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exponent {p0} has no positive partner on the critical hyperbola in dimension {n}")]
    NoCriticalPartner { n: u32, p0: f64 },

    #[error("operation not supported in the {0} regime")]
    UnsupportedRegime(&'static str),

    #[error("shooting bracket not found: {0}")]
    BracketNotFound(String),

    #[error("shooting did not converge after {iterations} bisections (bracket width {width:e})")]
    NoConvergence { iterations: usize, width: f64 },

    #[error("tail fit residual {residual:e} exceeds tolerance {tolerance:e}")]
    FitResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("integral {0} diverges for this exponent pair")]
    DivergentIntegral(&'static str),

    #[error("points coincide")]
    CoincidentPoints,

    #[error("point lies outside the reflection collar (distance {distance}, collar {collar})")]
    OutsideCollar { distance: f64, collar: f64 },

    #[error("point lies outside the domain")]
    OutsideDomain,

    #[error("operation requires a ball domain")]
    RequiresBall,

    #[error("inconclusive rank test: singular-value ratio {ratio:e}")]
    Inconclusive { ratio: f64 },

    #[error("missing constant: {0}")]
    MissingConstant(&'static str),

    #[error("no interior minimum: normal derivative {0} is not positive")]
    NoInteriorMinimum(f64),

    #[error("need {needed} admissible boundary points, found {found}")]
    InsufficientCriticalPoints { needed: usize, found: usize },

    #[error("integration failed: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
