use std::io;

use thiserror::Error;

/// Failures of modular and RNS arithmetic.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArithError {
    #[error("modulus must be an odd prime of 2..=1024 bits: {0}")]
    InvalidModulus(String),
    #[error("value is not a canonical residue for this modulus")]
    ModulusMismatch,
    #[error("zero has no inverse")]
    NotInvertible,
    #[error("RNS capacity contract violated: {0}")]
    ContractViolation(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Binary file format errors (SLDM, SLDV, SLDT, SLDP, SLDQ).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("modulus mismatch between files")]
    ModulusMismatch,
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            FormatError::Truncated
        } else {
            FormatError::Io(e)
        }
    }
}

/// Sparse matrix construction and product errors.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatrixError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid matrix: {0}")]
    Invalid(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

/// Rejected corpus generator parameters.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid corpus profile: {0}")]
pub struct ProfileError(pub String);

/// Errors from the distributed SpMV engine.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("protocol error at node ({node_i},{node_j}): {detail}")]
    Protocol {
        node_i: usize,
        node_j: usize,
        detail: String,
    },
    #[error("timed out waiting for a message at node ({0},{1})")]
    Timeout(usize, usize),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("run interrupted by observer")]
    Interrupted,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Errors from the Wiedemann solvers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver produced only the zero vector; retry with fresh random blocks")]
    SolverFailure,
    #[error("no linear generator within the degree bound; retry")]
    GeneratorFailure,
    #[error("interrupted after iteration {0}")]
    Interrupted(usize),
    #[error("checkpoint does not match the current run: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Top-level error for the pipeline and command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("only the trivial kernel was found")]
    TrivialKernel,
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Balance(#[from] crate::balance::BalanceError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    /// Innermost error once stage wrappers are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
