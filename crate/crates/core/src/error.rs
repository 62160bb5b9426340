use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical kernels, the synthesis routines and the
/// robust-stabilization pipeline.
///
/// Domain-level negative outcomes (an ineligible plant, a failed
/// verification, a refused SSNI request) are values, not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transfer function evaluated at a pole: s = {s}, nearest eigenvalue {nearest}")]
    PoleEvaluation { s: Complex64, nearest: Complex64 },

    #[error("state matrix is singular (pole at the origin)")]
    PoleAtOrigin,

    #[error("unsupported relative degree: {0} (only relative degree one or two is handled)")]
    UnsupportedRelativeDegree(String),

    #[error("normal-form construction failed: {0}")]
    Construction(String),

    #[error("zero dynamics not Lyapunov stable: {0}")]
    NotLyapunovStable(String),

    #[error("zero dynamics has an eigenvalue at the origin: {0}")]
    ZeroAtOrigin(String),

    #[error("pair is not controllable: {0}")]
    Uncontrollable(String),

    #[error("zero dynamics not Hurwitz: {0}")]
    NotHurwitz(String),

    #[error("no admissible H_b made (A11, K1) observable after {attempts} attempts")]
    SynthesisFailure { attempts: usize },

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("input-channel matrix is not symmetric positive definite: {0}")]
    InputChannelNotPositive(String),

    #[error("feedback loop is not well posed: {0}")]
    IllPosedLoop(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
