//! Dense linear algebra, entrywise kernels, seeded randomness and the binary
//! matrix encoding everything else is built on.

mod io;
mod matrix;
mod ops;
mod rng;
mod scalar;

pub use io::{matrix_to_bytes, read_matrix, write_matrix};
pub use matrix::{matmul, Matrix};
pub use ops::{
    activation, argmax_rows, elementwise, mean, reduce, sum, variance, Activation,
    ElementwiseOp, ReduceKind, Reduced,
};
pub(crate) use ops::{activate_inplace, relu, sigmoid};
pub use rng::RngStream;
pub use scalar::{Scalar, StridedRef};
