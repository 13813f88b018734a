//! Monte Carlo and closed-form tools for comparing random Gaussian projections
//! of high-dimensional data with their Gaussian approximations.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mc;
pub mod moments;
pub mod quadrature;
pub mod rng;
pub mod sources;
pub mod stats;

pub use error::{Error, Result};
pub use mc::Estimate;
pub use rng::SeedPath;
