//! Reverse-mode automatic differentiation over dense arrays.

mod array;
mod gradcheck;
mod tape;

pub use array::{DType, DenseArray, Real};
pub use gradcheck::{grad_check, grad_check_norm};
pub use tape::{Gradients, Op, Tape, Var};
