//! Parameter initialization and first-order optimizers.

mod init;
mod update;

pub use init::{initialize, InitPlan, InitScheme, DEFAULT_GAUSSIAN_STD};
pub use update::{adam_update, apply_update, rmsprop_update, Algorithm, OptimConfig, OptimState};
