//! Spectral simulator for the Wick-ordered cubic Schrödinger equation on
//! the 2-sphere with Gaussian random data, together with the random
//! averaging operator construction and Fourier-restriction diagnostics.
//!
//! Conventions: the surface measure has total mass 1, `λ_n² = n²+n+1` is
//! the eigenvalue of `−Δ+1` on degree `n`, and the flow is
//! `i∂_t u = (−Δ+1)u + N(u)` with `N(u) = |u|²u − 2‖u‖²u`.

pub mod dynamics;
pub mod error;
pub mod fields;
pub mod harmonics;
pub mod nonlinear;
pub mod rao;
pub mod rnorms;
pub mod stochastic;

pub use error::{Error, Result};
pub use fields::{Projection, SpectralField};
pub use harmonics::{HarmonicBasis, SphericalGrid, C64};
