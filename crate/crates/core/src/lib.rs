//! Nonlinear filtering for partially observed jump diffusions.

// `!(x > 0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod filter;
pub mod girsanov;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod operators;
pub mod oracles;
pub mod rng;
pub mod scalar;
pub mod simulator;

pub use error::Error;
pub use linalg::Matrix;
pub use model::test_functions::{builtin_test_functions, Builtin, TestFunction};
pub use model::{JumpKind, ModelError, ModelSpec};
pub use scalar::Scalar;

pub type ModelSpecF64 = ModelSpec<f64>;
pub type ModelSpecF32 = ModelSpec<f32>;
