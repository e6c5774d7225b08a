//! Gaussian and bootstrap approximation for the coordinate-wise maximum of
//! high-dimensional sums.
//!
//! The crate covers the max-of-sums statistic and its moment summaries,
//! empirical and multiplier bootstrap quantiles, closed-form approximation
//! bounds, a Gaussian-copula coverage simulator, and numerical checks of the
//! interpolation identities behind the comparison arguments.

pub mod data;
pub mod cli;
pub mod error;
pub mod interp;
pub mod rates;
pub mod resample;
pub mod rng;
pub mod sim;
pub mod stats;

pub use data::{Centering, DataMatrix};
pub use error::{Error, Result};
pub use resample::{BootstrapDraw, BootstrapScheme, MultiplierDistribution};
pub use stats::SampleArray;
