use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("invalid sample size: n must be at least 1")]
    InvalidSampleSize,

    #[error("no observations with nonzero kernel weight at t={t} (bandwidth {h})")]
    NoLocalData { t: f64, h: f64 },

    #[error("singular local fit at t={t}; enlarge the bandwidth(s)")]
    SingularLocalFit { t: f64 },

    #[error("singular pooled fit: design is rank deficient")]
    SingularFit,

    #[error("degenerate scale (standard deviation <= 1e-10) at t={t}")]
    DegenerateScale { t: f64 },

    #[error("first-stage coefficient curve is not available at t={t}")]
    CurveUnavailable { t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("estimation failed at every grid point")]
    EstimationFailed,

    #[error("fold {fold} is degenerate at t={t}")]
    FoldDegenerate { fold: usize, t: f64 },

    #[error("bandwidth selection failed: every candidate is degenerate")]
    SelectionFailed,

    #[error("covariance matrix is not positive definite")]
    CovarianceNotPD,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("subject '{0}' appears in the asynchronous file but not in the synchronous file")]
    OrphanSubject(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("I/O error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    /// Stable machine-readable code printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidBandwidth(_) | Error::InvalidSampleSize | Error::InvalidParameter(_) => {
                "BAD_PARAM"
            }
            Error::NoLocalData { .. } => "NO_LOCAL_DATA",
            Error::SingularLocalFit { .. } | Error::SingularFit => "SINGULAR_FIT",
            Error::DegenerateScale { .. } => "DEGENERATE_SCALE",
            Error::CurveUnavailable { .. } => "CURVE_UNAVAILABLE",
            Error::InvalidData(_) => "INVALID_DATA",
            Error::EstimationFailed => "ESTIMATION_FAILED",
            Error::FoldDegenerate { .. } => "FOLD_DEGENERATE",
            Error::SelectionFailed => "SELECTION_FAILED",
            Error::CovarianceNotPD => "COVARIANCE_NOT_PD",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::OrphanSubject(_) => "ORPHAN_SUBJECT",
            Error::EmptyInput(_) => "EMPTY_INPUT",
            Error::Io { .. } => "IO_ERROR",
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidBandwidth(_) | Error::InvalidSampleSize | Error::InvalidParameter(_) => 1,
            Error::InvalidData(_)
            | Error::Parse { .. }
            | Error::OrphanSubject(_)
            | Error::EmptyInput(_)
            | Error::Io { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            msg: err.to_string(),
        }
    }
}
