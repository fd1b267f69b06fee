use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (camera-space depth {depth})")]
    PointBehindCamera { depth: f64 },

    #[error("degenerate 2D covariance (determinant {det:e})")]
    DegenerateCovariance { det: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient views: need at least {needed}, got {got}")]
    InsufficientViews { needed: usize, got: usize },

    #[error("degenerate triangulation geometry")]
    DegenerateGeometry,

    #[error("covariance system is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("covariance has a non-positive eigenvalue ({value:e})")]
    NegativeEigenvalue { value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
