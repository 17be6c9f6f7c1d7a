use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands do not conform for the requested operation.
    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dim {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// An argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A numerical domain violation (zero norm, non-convergence, non-finite value).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A malformed input file.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// An invalid model/training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A malformed binary file.
    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dim(op: &'static str, lhs: impl ToString, rhs: impl ToString) -> Self {
        Error::Dim {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }

    pub fn io(path: impl ToString, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn format(path: impl ToString, msg: impl ToString) -> Self {
        Error::Format {
            path: path.to_string(),
            msg: msg.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
