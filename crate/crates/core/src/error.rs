use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or inconsistent input data, configuration, or files.
    Data,
    /// A numerical procedure could not produce a trustworthy answer.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {field} {reason}")]
    InvalidGeometry { field: &'static str, reason: String },

    #[error("{what}: expected {expected} values, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what}: non-finite or non-positive value at index {index}")]
    InvalidValue { what: &'static str, index: usize },

    #[error("insufficient nodes per cross section: {available} fiber(s) available, {required} required")]
    InsufficientNodes { available: usize, required: usize },

    #[error("degenerate sensor geometry: fiber placement makes the cross-section system singular (condition {condition:.3e})")]
    DegenerateGeometry { condition: f64 },

    #[error("cross-section solve did not converge: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    SolverResidual { residual: f64, tolerance: f64 },

    #[error("profile fit: {0}")]
    ProfileFit(String),

    #[error("shape integration: {0}")]
    Integration(String),

    #[error("underdetermined training problem: {rows} observations for {cols} unknown columns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("node selection: {0}")]
    Selection(String),

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("{stream} stream: timestamps not strictly increasing at sample {index}")]
    Unsorted { stream: &'static str, index: usize },

    #[error("streams do not overlap in time")]
    NoOverlap,

    #[error("trajectory curvature {max:.4} 1/m exceeds the configured bound {bound:.4} 1/m")]
    CurvatureBound { max: f64, bound: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model was trained for geometry {model}, but the supplied geometry is {supplied}")]
    FingerprintMismatch { model: String, supplied: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DegenerateGeometry { .. }
            | Error::SolverResidual { .. }
            | Error::Integration(_)
            | Error::Underdetermined { .. } => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
