use thiserror::Error;

/// Crate-wide error type. The `category` string is the machine-parsable
/// prefix used by the CLI (`ERROR:<category>:<message>`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Divisibility(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Search(String),
    #[error("{source}")]
    Io {
        #[from]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Divisibility(_) => "divisibility",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Training(_) => "training",
            Error::Numeric(_) => "numeric",
            Error::Search(_) => "search",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! err {
    ($variant:ident, $($arg:tt)*) => {
        $crate::error::Error::$variant(format!($($arg)*))
    };
}
pub(crate) use err;
