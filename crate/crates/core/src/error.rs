use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("window of {length} samples is shorter than the minimum of {min}")]
    WindowTooShort { length: usize, min: usize },
    #[error("no window of at least {min_length} samples ends at index {t2_index}")]
    EmptyEnsemble { t2_index: usize, min_length: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("time {t} is not before the critical time {tc}")]
    Domain { t: f64, tc: f64 },
    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("no feasible candidate found for window {t1}..={t2}")]
    NoFit { t1: usize, t2: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum CrashError {
    #[error("crash detection needs daily bars, got {0}; resample first")]
    Resolution(String),
    #[error("invalid crash configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum MultilevelError {
    #[error("level plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Crate-wide error, classified for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Crash(#[from] CrashError),
    #[error(transparent)]
    Multilevel(#[from] MultilevelError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Config,
    NoFit,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) => ErrorKind::Usage,
            Error::Config(_) => ErrorKind::Config,
            Error::Io { .. } => ErrorKind::Data,
            Error::Series(e) | Error::Fit(FitError::Series(e)) | Error::Multilevel(MultilevelError::Series(e)) => {
                match e {
                    SeriesError::Config(_) => ErrorKind::Config,
                    SeriesError::WindowTooShort { .. } => ErrorKind::Usage,
                    SeriesError::Data { .. } | SeriesError::Io { .. } | SeriesError::EmptyEnsemble { .. } => {
                        ErrorKind::Data
                    }
                }
            }
            Error::Model(_) => ErrorKind::Data,
            Error::Fit(FitError::NoFit { .. }) => ErrorKind::NoFit,
            Error::Fit(FitError::Config(_)) => ErrorKind::Config,
            Error::Crash(CrashError::Resolution(_)) => ErrorKind::Data,
            Error::Crash(CrashError::Config(_)) => ErrorKind::Config,
            Error::Multilevel(MultilevelError::Plan(_)) => ErrorKind::Config,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
