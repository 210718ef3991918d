//! Dense and sparse matrix arithmetic, reverse-mode differentiation and
//! Adam, all in 64-bit floats.

mod params;
mod sparse;
mod tape;
mod tensor;

pub use params::{
    finite_diff_grad, max_relative_error, relative_error, AdamConfig, Gradients, ParamGroup,
    ParamId, ParamStore, RELATIVE_ERROR_FLOOR,
};
pub use sparse::{Mask, SparseMatrix};
pub use tape::{Activation, Block, Tape, Var};
pub use tensor::Tensor;
