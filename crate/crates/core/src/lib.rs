//! Numerical checks of Poincaré-type inequalities for nonlocal Dirichlet
//! forms with stable-like jump kernels against measures `e^{-V}dx`.

pub mod concentration;
pub mod criteria;
pub mod discretize;
mod error;
pub mod lyapunov;
pub mod model;
pub mod quad;
pub mod spectral;
pub mod superpc;

pub use error::{Error, Result};
