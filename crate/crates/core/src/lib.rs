//! Numerical toolkit for two-band non-Hermitian lattice models.
//!
//! The crate covers the whole chain from a Bloch Hamiltonian to a reconstructed
//! experiment:
//!
//! - [`model`]: the two-band lattice model and its named phase presets,
//! - [`spectra`]: band tracking, the braid winding number and phase labels,
//! - [`berry`]: biorthogonal eigenpairs and the global Berry phase,
//! - [`evolve`]: non-Hermitian time evolution, steady-state extraction and k fitting,
//! - [`dilation`]: compilation of a non-Hermitian Hamiltonian into a Hermitian
//!   two-spin Hamiltonian and closed-form microwave pulse parameters,
//! - [`nvsim`]: four-level NV electron/nuclear spin simulation with crosstalk and
//!   quasi-static dephasing,
//! - [`tomo`]: photoluminescence count model and maximum-likelihood state reconstruction,
//! - [`pipeline`]: the end-to-end synthetic experiment.

pub mod berry;
pub mod dilation;
mod error;
pub mod evolve;
pub mod linalg;
pub mod model;
pub mod nvsim;
pub mod pipeline;
pub mod spectra;
pub mod tomo;

pub use error::{Error, Result};

/// Double-precision complex scalar.
pub type C64 = num_complex::Complex64;
/// 2×2 complex matrix (one band pair, one spin).
pub type Mat2 = nalgebra::Matrix2<C64>;
/// Complex 2-vector.
pub type Vec2 = nalgebra::Vector2<C64>;
/// 4×4 complex matrix on electron ⊗ nuclear spin.
pub type Mat4 = nalgebra::Matrix4<C64>;
/// Complex 4-vector on electron ⊗ nuclear spin.
pub type Vec4 = nalgebra::Vector4<C64>;
