//! Numerical core for semiclassical pair dynamics on the one-dimensional torus.
//!
//! Quantum states live on a [`grid::SpatialGrid`] as sampled integral kernels.
//! Classical densities live on a [`grid::PhaseGrid`].

pub mod bdg;
pub mod error;
pub mod grid;
pub mod interaction;
pub mod kinetic;
pub mod linalg;
pub mod metrics;
pub mod state;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex kernel or operator matrix.
pub type CMatrix = ndarray::Array2<C64>;
