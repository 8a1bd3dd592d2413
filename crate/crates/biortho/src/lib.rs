//! Bi-orthogonal polynomial systems on the unit circle.
//!
//! The crate builds the bi-orthogonal system of a (generally complex) weight
//! from its Fourier coefficients, applies rational modifications of the
//! weight at the level of the system, specializes them to integer exponent
//! shifts of regular semi-classical weights, and verifies the resulting web
//! of identities (recurrences, spectral and deformation derivatives,
//! bilinear determinant equations) against independent reconstructions.

pub mod bops;
pub mod cgu;
pub mod error;
pub mod linalg;
pub mod poly;
pub mod report;
pub mod schlesinger;
pub mod semiclassical;
pub mod tau;
pub mod verify;
pub mod weight;

pub use bops::{build_system, toeplitz_det, BopsSystem, Region};
pub use error::{Error, Result};
pub use linalg::Mat2;
pub use poly::Polynomial;
pub use semiclassical::SemiClassicalData;
pub use weight::{FourierTable, RationalMod, WeightFactor, WeightSpec};

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex64;
