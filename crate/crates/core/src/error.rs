use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("wavelength count mismatch: header declares {declared} bands but lists {listed} wavelengths")]
    WavelengthCountMismatch { declared: usize, listed: usize },

    #[error("non-finite value at float offset {offset}")]
    NonFinite { offset: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no band falls inside any slice")]
    NoBandOverlap,

    #[error("too few base features: {0} (need at least 3)")]
    TooFewBaseFeatures(usize),

    #[error("no labeled pixels")]
    NoLabeledPixels,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no discordant pairs")]
    NoDiscordantPairs,

    #[error("zero variance")]
    ZeroVariance,

    #[error("zero intra-class spread")]
    ZeroIntraClassSpread,

    #[error("wavelength unavailable for {index}: {wavelength_nm} nm has no band within {tolerance_nm} nm")]
    WavelengthUnavailable {
        index: String,
        wavelength_nm: f64,
        tolerance_nm: f64,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line surface: 1 usage/config,
    /// 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
