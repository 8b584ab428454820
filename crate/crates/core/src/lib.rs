pub mod bangle;
pub mod canonical;
pub mod cli;
pub mod error;
pub mod field;
pub mod forms;
pub mod matrix;
pub mod poly;
pub mod random;
pub mod regularize;

pub use error::{Error, Result};
pub use field::{Involution, Scalar, ScalarField};
pub use matrix::Mat;
