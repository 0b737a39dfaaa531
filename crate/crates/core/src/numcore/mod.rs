//! Dense matrices, a reverse-mode tape and the Adam update.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use tape::{sigmoid, softmax_in_place, topk_indices, Gradients, Tape, Var};
pub use tensor::Tensor2;
