//! Dense `f32` tensors with reverse-mode automatic differentiation.

mod conv;
mod gradcheck;
pub mod linalg;
mod nn_ops;
mod ops;
mod rng;
mod tape;
mod tensor;

pub use conv::ConvGeometry;
pub use gradcheck::{finite_diff_grad, relative_error};
pub use rng::Rng;
pub use tape::{BackwardCtx, BackwardFn, Tape, Var};
pub use tensor::Tensor;
