use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the crate.
#[derive(Debug)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    Dimension(String),
    /// An argument is outside its valid domain.
    InvalidArgument(String),
    /// A network failed shape validation.
    InvalidModel(ValidationReport),
    /// A structural operation could not be applied.
    Surgery { layer: usize, message: String },
    /// Malformed dataset or checkpoint bytes.
    Format(String),
    /// Configuration file problem, located by line and key.
    Config { line: usize, key: String, message: String },
    Io(io::Error),
}

/// First violated shape constraint found while walking a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    /// Index of the layer producing the offending shape, if any.
    pub producer: Option<usize>,
    /// Index of the layer that rejected it.
    pub consumer: usize,
    pub message: String,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.producer {
            Some(p) => write!(f, "layers {}->{}: {}", p, self.consumer, self.message),
            None => write!(f, "layer {}: {}", self.consumer, self.message),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InvalidModel(report) => write!(f, "invalid model: {report}"),
            Error::Surgery { layer, message } => write!(f, "surgery on layer {layer}: {message}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Config { line, key, message } => {
                write!(f, "config error at line {line}, key '{key}': {message}")
            }
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl Error {
    /// Tags an I/O failure with the path it concerns.
    pub(crate) fn at(path: &std::path::Path) -> impl FnOnce(io::Error) -> Error + '_ {
        move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
