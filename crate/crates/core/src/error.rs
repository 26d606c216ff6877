use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate quadrature interval [{rho_min}, {rho_max}]")]
    DegenerateInterval { rho_min: f64, rho_max: f64 },

    #[error("quadrature error {achieved:e} exceeds tolerance {tolerance:e}")]
    QuadratureTolerance { achieved: f64, tolerance: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index:?} out of range for mode sizes {sizes:?}")]
    IndexOutOfRange { index: [usize; 3], sizes: [usize; 3] },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("atom {atom} lies outside the computational box")]
    AtomOutsideBox { atom: usize },

    #[error("atom {atom} is {actual} grid units from the boundary, needs at least {required}")]
    MarginViolation { atom: usize, required: f64, actual: f64 },

    #[error("reference kernel has not been split into long and short parts")]
    KernelNotSplit,

    #[error("separation gamma={gamma} spans {span} which exceeds the box width {width}")]
    SeparationTooLarge { gamma: usize, span: f64, width: f64 },

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("grid node {node:?} coincides with atom {atom}")]
    SingularNode { node: [usize; 3], atom: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("molecule contains no atoms")]
    NoAtoms,

    #[error("{0}")]
    Format(String),

    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure class, mapped to process exit codes by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
    Io,
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Config(_) | Error::InvalidArgument(_) | Error::MarginViolation { .. } => {
                ErrorClass::Config
            }
            Error::AtomOutsideBox { .. } | Error::SeparationTooLarge { .. } => ErrorClass::Config,
            Error::Io(_) | Error::Parse { .. } | Error::NoAtoms | Error::Format(_) => ErrorClass::Io,
            _ => ErrorClass::Numeric,
        }
    }
}
