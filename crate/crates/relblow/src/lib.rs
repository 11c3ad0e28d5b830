//! Numerical laboratory for singularity formation in (1+1)-dimensional
//! relativistic Euler flows.
//!
//! The crate is layered: [`eos`] supplies the polytropic pressure law and its
//! derivatives, [`isentropic`] and [`nonisentropic`] build the Riemann-variable
//! calculus on top of it, [`solver`] integrates the conservation laws and traces
//! characteristics through the numerical field, [`criteria`] classifies initial
//! data, and [`verify`] turns every checkable identity into a named test.

pub mod config;
pub mod criteria;
pub mod driver;
pub mod eos;
pub mod error;
pub mod initial;
pub mod isentropic;
pub mod nonisentropic;
pub mod numerics;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
