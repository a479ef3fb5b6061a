//! Fixed-precision compressed arrays and error bounds for iterative solvers.

pub mod bounds;
pub mod codec;
pub mod dd;
pub mod error;
pub mod experiments;
pub mod iterops;
pub mod numrep;

pub use error::{Error, Result};
