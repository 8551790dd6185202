//! Dense matrices, LU solving and the reverse-mode tape.

mod lu;
mod matrix;
pub mod ops;
mod tape;

pub use lu::{solve, Lu, PIVOT_THRESHOLD};
pub use matrix::Matrix;
pub use ops::{cross_entropy_from_logits, softmax_rows};
pub use tape::{Tape, Var};
