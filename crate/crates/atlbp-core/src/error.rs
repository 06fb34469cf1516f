use thiserror::Error;

/// Error type shared by every module in this crate.
///
/// Variants group into three exit-code classes for the CLI: usage and
/// configuration problems (1), data and file problems (2), numeric and
/// shape problems (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("numeric domain error: {0}")]
    Numeric(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown label: {0}")]
    Label(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 1 usage/config, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Data(_)
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::Label(_)
            | Error::Io(_) => 2,
            Error::Dimension { .. } | Error::Numeric(_) | Error::Index(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
