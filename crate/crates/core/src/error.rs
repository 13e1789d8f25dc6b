use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// A precision subtraction (Gaussian division) left a non-PD matrix.
    #[error("fused precision is not positive definite: {context}")]
    NonPositiveDefiniteResult { context: String },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("empty mixture")]
    EmptyMixture,

    #[error("gate matrix is not positive definite")]
    GateMatrixInvalid,

    #[error("joint covariance is not positive semi-definite")]
    JointCovarianceInvalid,

    #[error("measurement model is singular at this state")]
    MeasurementSingular,

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("all IMM mode likelihoods underflowed; mode probabilities reset to uniform")]
    ModeLikelihoodDegenerate,

    #[error("feedback mismatch: {0}")]
    FeedbackMismatch(String),

    #[error("quadrature did not converge after {refinements} refinements")]
    QuadratureNonConvergence { refinements: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),
}
