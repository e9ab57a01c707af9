use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, sample rates, ranges).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Malformed or inconsistent data on disk.
    #[error("format error: {0}")]
    Format(String),
    /// A loss or parameter became NaN/inf.
    #[error("numeric failure: {0}")]
    NonFinite(String),
    /// An internal consistency check failed.
    #[error("internal error: {0}")]
    Internal(String),
    /// `origin` is `line N` of a config file or `--set`.
    #[error("config error at {origin}: `{key}`: {msg}")]
    Config { key: String, origin: String, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("WAV error on {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Returns `Err(Error::Contract(..))` when the condition does not hold.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
