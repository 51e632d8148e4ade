use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid decomposition: {0}")]
    InvalidLayout(String),

    #[error("subdomain index {index} out of range (have {count})")]
    SubdomainIndex { index: usize, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nonpositive permeability {value} in cell {cell}")]
    NonpositivePermeability { cell: usize, value: f64 },

    #[error("matrix is singular (pivot {pivot})")]
    SingularMatrix { pivot: usize },

    #[error("singular local Jacobian on subdomain {subdomain}")]
    SingularLocal { subdomain: usize },

    #[error("singular coarse Jacobian")]
    SingularCoarse,

    #[error("inner Newton on subdomain {subdomain} did not converge after {iterations} iterations (residual {residual:e})")]
    LocalNonConvergence {
        subdomain: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("coarse Newton did not converge after {iterations} iterations (residual {residual:e})")]
    CoarseNonConvergence { iterations: usize, residual: f64 },

    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNonConvergence { iterations: usize, residual: f64 },

    #[error("cached linearization does not belong to the requested state")]
    StaleCache,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
