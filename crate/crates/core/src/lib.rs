//! Bloch/Floquet analysis of periodic-coefficient parabolic operators
//! `L = ∂² + a∂ + df(ū(x))` on the line with 1-periodic coefficients.
//!
//! The crate computes Floquet monodromies and periodic Evans functions,
//! Fourier–Galerkin Bloch spectra, whole-line and periodic resolvent kernels,
//! time-domain Green functions with their heat-kernel leading term, and
//! simulates the nonlinear model problems whose decay rates the linear
//! estimates predict.

pub mod bloch;
pub mod config;
pub mod error;
pub mod fit;
pub mod floquet;
pub mod green;
pub mod linalg;
pub mod ode;
pub mod oracle;
pub mod profile;
pub mod quadrature;
pub mod resolvent;
pub mod run;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
