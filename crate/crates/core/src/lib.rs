//! Numerical toolkit for generalized weighted composition operators
//! `f -> u * (f^(n) o phi)` from weighted Bergman spaces with doubling weights
//! into `L^q` spaces on the unit disc.

pub mod error;
pub(crate) mod quad;

pub mod criteria;
pub mod geometry;
pub mod measures;
pub mod spaces;
pub mod weights;

pub mod cli;

pub use error::{Error, Result};
pub use num_complex::Complex64;
