pub mod approx;
pub mod arith;
pub mod config;
pub mod diagalg;
pub mod error;
pub mod hull;
pub mod locreport;
pub mod sampling;
pub mod specops;
pub mod tridiag;

pub use error::{Error, Result};
