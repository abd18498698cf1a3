use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("mesh needs at least 2 cells per direction, got {nx}x{ny}")]
    MeshTooCoarse { nx: usize, ny: usize },

    #[error("field has {got} entries, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("elliptic operator without Dirichlet faces is singular")]
    SingularOperator,

    #[error("linear solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("zero pivot at row {0} of a banded factorization")]
    ZeroPivot(usize),

    #[error("Dirichlet density must be strictly positive, got {0}")]
    NonPositiveBoundaryData(f64),

    #[error("Gummel iteration stopped after {iterations} sweeps, last potential change {residual:e}")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("invalid netlist: {0}")]
    InvalidNetlist(String),

    #[error("E1 = E - AQ is singular ({0})")]
    SingularE1(String),

    #[error("network stepping matrix is singular at dt = {0}")]
    SingularStep(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
