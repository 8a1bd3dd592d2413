//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error enum.
///
/// The variants are grouped by how the CLI maps them to exit codes:
/// input/validation problems, degeneracies of the underlying system, and
/// accuracy failures of the numerical machinery.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent weight description.
    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    /// Evaluation requested outside the valid domain (on the unit circle,
    /// at a factor zero/pole, at a spectral-matrix pole, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested data outside the validity range of a formula.
    #[error("validity error: {0}")]
    Validity(String),

    /// A Fourier table does not cover the requested index range.
    #[error("range error: {0}")]
    Range(String),

    /// Quadrature failed to reach the requested tolerance.
    #[error("accuracy error: {0} (achieved tail {achieved:.3e})", achieved = .1)]
    Accuracy(String, f64),

    /// A Toeplitz determinant fell below the existence threshold.
    #[error("existence error: |I_{n}| = {magnitude:.3e} below threshold")]
    Existence { n: usize, magnitude: f64 },

    /// A standing hypothesis of a transformation formula is violated.
    #[error("degeneracy error: {0}")]
    Degeneracy(String),

    /// A shifted exponent makes a formula undefined (e.g. rho_j = -1 for an
    /// up-shift auxiliary sum).
    #[error("exponent degeneracy: {0}")]
    ExponentDegeneracy(String),

    /// An identity that presumes nonvanishing data was requested where the
    /// data vanishes (e.g. the decoupled second-order recurrence at r_n = 0).
    #[error("inapplicable: {0}")]
    Inapplicable(String),

    /// Two redundant computations of the same quantity disagree.
    #[error("consistency error: {0} (difference {1:.3e})")]
    Consistency(String, f64),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// File I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
