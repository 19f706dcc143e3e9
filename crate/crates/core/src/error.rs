use thiserror::Error;

/// Errors produced by lattice, flatness, protocol and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("basis is singular or not full rank")]
    SingularBasis,

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("decoder {decoder} cannot be used with this lattice: {reason}")]
    DecoderMismatch {
        decoder: &'static str,
        reason: String,
    },

    #[error("enumeration decoder limited to n <= {max}, lattice has n = {n}")]
    EnumerationGuard { n: usize, max: usize },

    #[error("enumeration budget of {budget} points exceeded")]
    EnumerationBudget { budget: u64 },

    #[error("vector is not on the fine lattice (coordinate deviation {deviation:e})")]
    NotOnLattice { deviation: f64 },

    #[error("lattices are not nested: {0}")]
    NotNested(String),

    #[error("point lies outside the fundamental region")]
    OutsideRegion,

    #[error("coset index {index} out of range for cardinality {cardinality}")]
    InvalidIndex { index: u64, cardinality: u64 },

    #[error("covariance matrix is not positive semidefinite")]
    NonPsdCovariance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resolution guard: {0}")]
    ResolutionGuard(String),

    #[error("infeasible: binding constraint `{binding}`")]
    Infeasible { binding: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status used by the command line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::InvalidLattice(_)
            | Error::NonPsdCovariance
            | Error::SingularBasis
            | Error::DimensionMismatch { .. } => 2,
            Error::Infeasible { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SingularBasis => "singular_basis",
            Error::InvalidLattice(_) => "invalid_lattice",
            Error::DecoderMismatch { .. } => "decoder_mismatch",
            Error::EnumerationGuard { .. } => "enumeration_guard",
            Error::EnumerationBudget { .. } => "enumeration_budget",
            Error::NotOnLattice { .. } => "not_on_lattice",
            Error::NotNested(_) => "not_nested",
            Error::OutsideRegion => "outside_region",
            Error::InvalidIndex { .. } => "invalid_index",
            Error::NonPsdCovariance => "non_psd_covariance",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ResolutionGuard(_) => "resolution_guard",
            Error::Infeasible { .. } => "infeasible",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
