use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the calibration and evaluation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),

    #[error("point depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("pixel lies outside the valid field of the FOV model (r_d * omega = {0} >= pi/2)")]
    OutsideField(f64),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid response: {0}")]
    InvalidResponse(&'static str),

    #[error("invalid vignette: {0}")]
    InvalidVignette(&'static str),

    #[error("exposure time must be positive, got {0}")]
    NonPositiveExposure(f64),

    #[error("invalid exposure sweep: {0}")]
    InvalidSweep(String),

    #[error("no valid observations")]
    NoValidObservations,

    #[error("unobserved intensity ranges disconnect the estimation: {ranges:?}")]
    UnobservedIntensities { ranges: Vec<(u8, u8)> },

    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),

    #[error("not enough points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
