use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The sample covariance matrix is numerically singular. Test runners
    /// map this to an outright rejection of the null hypothesis.
    #[error("sample covariance matrix is numerically singular")]
    SingularCovariance,

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("corrupt calibration: {0}")]
    CorruptCalibration(String),

    #[error("CSV parse error at row {row}, column {col}: {msg}")]
    Csv { row: usize, col: usize, msg: String },

    #[error("distribution spec parse error at position {pos}: {msg}")]
    Spec { pos: usize, msg: String },

    #[error("numeric limit reached: {0}")]
    NumericLimit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
