pub mod analytic;
pub mod applications;
pub mod conic;
pub mod error;
pub mod instruments;
pub mod matcore;
pub mod random;
pub mod simulability;

pub use error::{Error, Result};
