use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("origin has no geodetic image")]
    OriginHasNoGeodeticImage,

    #[error("kepler iteration did not converge (residual {residual:e} rad)")]
    KeplerNonConvergence { residual: f64 },

    #[error("propagation interval {offset_s} s exceeds the ±{limit_s} s validity window")]
    OutsidePropagationWindow { offset_s: f64, limit_s: f64 },

    #[error("invalid orbital elements for {0}")]
    InvalidElements(String),

    #[error("propagation failed for satellite {sat}: {source}")]
    Propagation {
        sat: String,
        #[source]
        source: Box<Error>,
    },

    #[error("catalog must contain at least one satellite")]
    EmptyCatalog,

    #[error("duplicate satellite id {0}")]
    DuplicateSatellite(String),

    #[error("satellite {0} is not in the catalog")]
    UnknownSatellite(String),

    #[error("no visible satellites")]
    NoVisibleSatellites,

    #[error("degenerate geometry")]
    DegenerateGeometry,

    #[error("at least 4 full pseudoranges are required, got {full}")]
    InsufficientMeasurements { full: usize },

    #[error("underdetermined system")]
    Underdetermined,

    #[error("invalid measurement set: {0}")]
    InvalidMeasurements(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
