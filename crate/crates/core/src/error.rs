use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("target directions are degenerate under the covariance (r_x^2 = {r_x_sq:e})")]
    DegenerateDirections { r_x_sq: f64 },
    #[error("covariance is rank-deficient along direction {index}")]
    RankDeficient { index: usize },
    #[error("unsupported covariance kind for this operation: {0}")]
    UnsupportedSpec(&'static str),
    #[error("cannot draw {k} orthonormal directions in dimension {d}")]
    TooManyDirections { k: usize, d: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("prediction cache is stale (cache version {cache}, ensemble version {ensemble})")]
    StaleCache { cache: u64, ensemble: u64 },
    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: u64 },
    #[error("expected a unit vector, norm is {norm}")]
    NotUnit { norm: f64 },
    #[error("vector is not tangent at the base point (inner product {inner:e})")]
    NotTangent { inner: f64 },
    #[error("activation construction violates `{constraint}` (observed {observed})")]
    ActivationConstraint { constraint: &'static str, observed: f64 },
    #[error("trace too short: {len} records with burn-in {burn_in}")]
    TraceTooShort { len: usize, burn_in: usize },
    #[error("all particles are degenerate")]
    AllDegenerate,
    #[error("initial objective {f0} must exceed the accuracy target {epsilon}")]
    ObjectiveBelowTarget { f0: f64, epsilon: f64 },
    #[error("space mismatch: {0}")]
    SpaceMismatch(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
