//! Error type shared across the library.

use thiserror::Error;

/// Errors surfaced by the control, game and verification routines.
///
/// Numerical routines in this crate prefer returning an error over silently
/// producing a value outside its documented contract.
#[derive(Debug, Error)]
pub enum Error {
    /// A singular value decomposition did not converge.
    #[error("SVD failed to converge for a {rows}x{cols} matrix (context: {context})")]
    SvdFailure {
        rows: usize,
        cols: usize,
        context: &'static str,
    },

    /// Matrix or vector dimensions do not match the expected shape.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A parameter failed validation (non-positive scale, bad horizon, ...).
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The requested attenuation level is below the feasibility threshold.
    #[error(
        "gain {gamma} is below the feasibility threshold {gamma_star}; no finite value exists"
    )]
    InfeasibleGain { gamma: f64, gamma_star: f64 },

    /// The closed-form policy is only defined at the critical gain.
    #[error("operation requires the critical gain {gamma_star}, got {gamma}")]
    UnsupportedGain { gamma: f64, gamma_star: f64 },

    /// An inner maximisation is unbounded for the supplied coefficients.
    #[error("unbounded maximisation in {context}: {reason}")]
    UnboundedMaximisation {
        context: &'static str,
        reason: String,
    },

    /// A randomised input description violates its moment constraint.
    #[error("invalid input moments: second moment {second_moment} < |mean|^2 = {mean_norm_sq}")]
    InvalidMoments {
        second_moment: f64,
        mean_norm_sq: f64,
    },

    /// An internal consistency identity failed beyond tolerance.
    #[error("consistency check failed in {context}: |{lhs} - {rhs}| > {tolerance}")]
    ConsistencyCheck {
        context: &'static str,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    },

    /// Configuration file problems (missing file, bad JSON, unknown keys).
    #[error("configuration error: {0}")]
    Config(String),

    /// Filesystem failures while writing experiment outputs.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
