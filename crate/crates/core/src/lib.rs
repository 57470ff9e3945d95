//! Steady-state excitation transport through disordered chains with
//! power-law hopping, pumped at the first site and drained at the last.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod model;
pub mod spectral;
pub mod theory;
pub mod transport;

mod linalg;

pub use error::{Error, Result};
