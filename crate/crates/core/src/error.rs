use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitianInput(f64),
    #[error("dimension {dim} exceeds the supported maximum of {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("target operation is not unitary (max deviation {0:.3e})")]
    NotUnitaryTarget(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("channel trace {0:.12} is not normalized to 1")]
    UnnormalizedChannel(f64),
    #[error("channel is not physical (min eigenvalue {0:.3e})")]
    UnphysicalChannel(f64),
    #[error("pulse sequence is empty")]
    EmptySequence,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("F_QS = {0:.3e} is too small; the decoupling operation has failed")]
    DegenerateOperation(f64),
    #[error("incomplete tomography record set: missing {0}")]
    IncompleteRecordSet(String),
    #[error("duplicate tomography record: {0}")]
    DuplicateRecord(String),
    #[error("all eigenvalues clip to zero")]
    ZeroTrace,
    #[error("fringe slope is not resolved above shot noise (amplitude {amplitude:.3e}, standard error {std_err:.3e})")]
    SlopeTooSmall { amplitude: f64, std_err: f64 },
    #[error("fit did not converge: {0}")]
    FitDidNotConverge(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
