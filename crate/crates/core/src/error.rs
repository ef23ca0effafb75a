use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bit count {len} is not a multiple of {bits_per_symbol} bits per symbol")]
    BitLength { len: usize, bits_per_symbol: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("reference signal has zero power")]
    ZeroReferencePower,
    #[error("invalid subcarrier geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "frame capacity mismatch: {bits} bits do not fill {symbols} symbols of {per_symbol} bits"
    )]
    Capacity {
        bits: usize,
        symbols: usize,
        per_symbol: usize,
    },
    #[error("tone at {freq_hz} Hz aliases at sample rate {sample_rate_hz} Hz")]
    Aliasing { freq_hz: f64, sample_rate_hz: f64 },
    #[error("training sequence is zero on bin {0}")]
    ZeroTraining(usize),
    #[error("frame too short: {samples} samples, need at least {needed}")]
    FrameTooShort { samples: usize, needed: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
