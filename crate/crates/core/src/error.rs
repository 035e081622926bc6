use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("factor {factor} out of range for a system of {n} factors")]
    SupportOutOfRange { factor: usize, n: usize },

    #[error("factor {0} is not in the operator support")]
    NotInSupport(usize),

    #[error("duplicate factor {0} in support")]
    DuplicateFactor(usize),

    #[error("matrix is singular: smallest singular value {sigma:e} is below 1e-12")]
    Singular { sigma: f64 },

    #[error("operator is not unitary: defect {defect:e}")]
    NotUnitary { defect: f64 },

    #[error("matrix is not an isometry: defect {defect:e}")]
    NotIsometry { defect: f64 },

    #[error("density input is not positive semidefinite: eigenvalue {min_eig:e}")]
    NotPsd { min_eig: f64 },

    #[error("state is not normalized: norm {norm}")]
    NotNormalized { norm: f64 },

    #[error("kraus operators are not trace preserving: defect {defect:e}")]
    NotTracePreserving { defect: f64 },

    #[error("hilbert space dimension {dim} exceeds cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid ring: {0}")]
    InvalidRing(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("gate {gate} on sites {sites:?} cannot be assigned to any quarter piece")]
    UnassignableGate { gate: usize, sites: Vec<usize> },

    #[error("piece '{piece}' acts outside its declared support: witness {witness}")]
    SupportViolation { piece: String, witness: String },

    #[error("locality violation at event {event} ({party}): {witness}")]
    Locality {
        event: usize,
        party: String,
        witness: String,
    },

    #[error("operator is not a logical operator of the code: {0}")]
    NotLogical(String),

    #[error("geometry check failed for block {block}: marked logical not recoverable on {half}")]
    Geometry { block: usize, half: String },

    #[error("insufficient ancillas for block {block}: {detail}")]
    InsufficientAncillas { block: usize, detail: String },

    #[error("blocks are not aligned: {0}")]
    NotAligned(String),

    #[error("correlator missing from reference oracle: {0}")]
    MissingCorrelator(String),

    #[error("negative certificate input: {0}")]
    NegativeInput(String),

    #[error("inconsistent classical records: {0}")]
    InconsistentRecords(String),

    #[error("POVM completeness defect {defect:e} exceeds 1e-9")]
    Incomplete { defect: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
