use thiserror::Error;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data, configuration, or schema.
    Validation,
    /// A numerical operation could not produce a meaningful answer.
    Numerical,
    /// Reading or writing files failed.
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("ill-conditioned matrix: eigenvalue {eigenvalue:e} against largest {largest:e}")]
    Conditioning { eigenvalue: f64, largest: f64 },

    #[error("degenerate direction: Y-coordinate of the generalized eigenvector is {gamma_y:e} relative to its norm")]
    DegenerateDirection { gamma_y: f64 },

    #[error("smallest generalized eigenvalue is repeated (gap {gap:e}); the TLS direction is not identified")]
    AmbiguousEigenvalue { gap: f64 },

    #[error("generalized eigen residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Any of the above, tagged with the pipeline stage that raised it.
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Conditioning { .. }
            | Error::DegenerateDirection { .. }
            | Error::AmbiguousEigenvalue { .. }
            | Error::Residual { .. } => ErrorKind::Numerical,
            Error::Io(_) => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    /// Innermost error, with stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Tags errors with the stage that raised them.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e) })
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line());
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => {
                let message = format!("{other:?}");
                match line {
                    Some(line) => Error::Parse { line, message },
                    None => Error::Schema(message),
                }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
