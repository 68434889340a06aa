use thiserror::Error;

/// Errors raised anywhere in the decomposition and regression pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("series too short: need at least {required} samples, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFiniteInput { index: usize },
    #[error("insufficient extrema to build an envelope")]
    InsufficientExtrema,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("component has fewer than two maxima")]
    TooFewPeaks,
    #[error("component has no maximum or no minimum")]
    TooFewExtrema,
    #[error("series carries no start date")]
    MissingDateLabel,
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("channel {channel} has length {actual}, expected {expected}")]
    ChannelLengthMismatch { channel: String, expected: usize, actual: usize },
    #[error("no predictor column is correlated with the response")]
    AllZeroCorrelation,
    #[error("coordinate descent did not converge after {sweeps} sweeps (last max change {gap:e})")]
    NoConvergence { sweeps: usize, gap: f64 },
    #[error("too few rows: {rows} rows for {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
    #[error("response has zero variance")]
    ZeroVarianceResponse,
    #[error("series has zero variance over the correlation window")]
    DegenerateSeries,
    #[error("operation requires design {expected}")]
    DesignMismatch { expected: &'static str },
    #[error("bad block length {block_len} for {n} rows")]
    BadBlockLength { block_len: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
}

/// Broad failure class, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    /// Module-qualified machine code, e.g. `emd.series_too_short`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SeriesTooShort { .. } => "signal.series_too_short",
            Error::NonFiniteInput { .. } => "signal.non_finite_input",
            Error::InsufficientExtrema => "signal.insufficient_extrema",
            Error::LengthMismatch { .. } => "signal.length_mismatch",
            Error::TooFewPeaks => "emd.too_few_peaks",
            Error::TooFewExtrema => "emd.too_few_extrema",
            Error::MissingDateLabel => "emd.missing_date_label",
            Error::BadDimension(_) => "memd.bad_dimension",
            Error::ChannelLengthMismatch { .. } => "memd.channel_length_mismatch",
            Error::AllZeroCorrelation => "lasso.all_zero_correlation",
            Error::NoConvergence { .. } => "lasso.no_convergence",
            Error::TooFewRows { .. } => "lasso.too_few_rows",
            Error::ZeroVarianceResponse => "lasso.zero_variance_response",
            Error::DegenerateSeries => "emdr.degenerate_series",
            Error::DesignMismatch { .. } => "emdr.design_mismatch",
            Error::BadBlockLength { .. } => "emdr.bad_block_length",
            Error::InvalidParameter(_) => "config.invalid_parameter",
            Error::Config(_) => "config.error",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) | Error::BadBlockLength { .. } => ErrorClass::Config,
            Error::NoConvergence { .. }
            | Error::AllZeroCorrelation
            | Error::InsufficientExtrema
            | Error::TooFewPeaks
            | Error::TooFewExtrema
            | Error::DegenerateSeries
            | Error::ZeroVarianceResponse => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
