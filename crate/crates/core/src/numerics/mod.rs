//! Dense tensors, a reverse-mode tape, Adam, and finite-difference checks.

mod adam;
mod gradcheck;
mod store;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{central_difference, grad_check, relative_error};
pub use store::ParameterStore;
pub use tape::{gelu, Tape, Var};
pub use tensor::{softmax, Tensor};
