use thiserror::Error;

/// Errors raised by the estimators, spectra, population laws and harness drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("non-finite input value {value} at index {index}")]
    NonFiniteInput { index: usize, value: f64 },

    #[error("sample must contain at least one value")]
    EmptySample,

    #[error("level alpha = {0} is outside (0, 1]")]
    AlphaOutOfRange(f64),

    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("weights are not non-increasing: entry {index} is below its successor")]
    NotMonotone { index: usize },

    #[error("vector is not on the probability simplex: {0}")]
    NotOnSimplex(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("representing set has no vertices")]
    EmptySet,

    #[error("argument {value} outside the domain {domain}")]
    DomainError { value: f64, domain: &'static str },

    #[error("quadrature failed to reach tolerance {tolerance:e} within {evaluations} evaluations")]
    QuadratureFailure { tolerance: f64, evaluations: usize },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("recovered weights increase at index {index} ({lower} < {upper}); oracle is not a comonotonic law-invariant estimator")]
    NotMonotoneRecovered { index: usize, lower: f64, upper: f64 },

    #[error("recovered weights sum to {0}, not 1")]
    NotNormalised(f64),

    #[error("asymptotic variance integrand is not finite")]
    NonFiniteVariance,

    #[error("asymptotic variance {0:e} is degenerate")]
    DegenerateVariance(f64),

    #[error("log-log fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("spectrum is not Lipschitz; the limit theorems used here require a Lipschitz spectrum")]
    NotLipschitz,

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = RiskError> = std::result::Result<T, E>;
