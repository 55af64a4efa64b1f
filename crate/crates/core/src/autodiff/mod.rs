//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! The engine is a dynamic (define-by-run) tape: each operation computes its
//! forward value immediately and, when any input participates in training,
//! records a closure that later pushes adjoints backward. This keeps the
//! interaction-stack depth and sequence lengths free to vary at runtime.
//!
//! Tensors and tapes are confined to a single thread; independent model
//! replicas may run on separate threads.

mod check;
mod ops_elementwise;
mod ops_linear;
mod ops_reduce;
mod ops_shape;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_many, DEFAULT_EPS};
pub use tape::Tape;
pub use tensor::Tensor;
