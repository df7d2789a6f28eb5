//! Recurrent identity networks and the machinery around them.

pub mod analysis;
pub mod bptt;
pub mod cells;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod optim;
pub mod tasks;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngStream, Scalar};

/// Working-precision matrix.
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Network64 = bptt::Network<f64>;
pub type Network32 = bptt::Network<f32>;
