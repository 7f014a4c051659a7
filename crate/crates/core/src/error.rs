use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid window [{n_min}, {n_max}]: need n_min < n_max")]
    InvalidWindow { n_min: i64, n_max: i64 },
    #[error("index {index} outside window [{n_min}, {n_max}]")]
    IndexOutOfWindow { index: i64, n_min: i64, n_max: i64 },
    #[error("coefficient A_{index} is singular or too ill-conditioned (condition {condition:e})")]
    SingularCoefficient { index: i64, condition: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backward step at n={index} is not contractive: ‖A⁻¹‖·r = {factor}")]
    BackwardNotContractive { index: i64, factor: f64 },
    #[error("inner fixed point did not converge at n={index} after {iterations} iterations")]
    NoConvergence { index: i64, iterations: usize },
    #[error("P is not a projection: ‖P² − P‖ = {defect:e}")]
    NotAProjection { defect: f64 },
    #[error("dichotomy certificate rejected: max relative violation {violation:e} at (n, m) = ({n}, {m})")]
    CertificateRejected { violation: f64, n: i64, m: i64 },
    #[error("tail budget {budget:e} exceeds requested accuracy {requested:e}")]
    TailBudgetExceeded { budget: f64, requested: f64 },
    #[error("fixed-point map is not contractive: θ = {theta}")]
    NotContractive { theta: f64 },
    #[error("Picard iteration cap {cap} exceeded (last step {last_step:e})")]
    IterationCapExceeded { cap: usize, last_step: f64 },
    #[error("window too narrow: {0}")]
    WindowTooNarrow(String),
    #[error("Hölder estimate not applicable: {0}")]
    NotApplicable(String),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl Error {
    /// True for failures of the numerical machinery itself, as opposed to
    /// bad input or a check that was run and did not pass.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularCoefficient { .. }
                | Error::BackwardNotContractive { .. }
                | Error::NoConvergence { .. }
                | Error::IterationCapExceeded { .. }
                | Error::NotContractive { .. }
                | Error::TailBudgetExceeded { .. }
        )
    }
}
