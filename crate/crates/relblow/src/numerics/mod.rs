//! Numerical kernels shared by the calculus, solver and verification layers.

pub mod cheb;
pub mod diff;
pub mod fit;
pub mod quad;
pub mod roots;
