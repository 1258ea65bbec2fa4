//! Robust estimation of sparse functionals under ε-contamination.

pub mod ellipsoid;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod simulator;
pub mod spca;
pub mod testkit;
pub mod thresholding;

pub use error::{Error, Result};
