//! Dense channels-last tensors with reverse-mode autodiff, plus the layers,
//! optimizer and checkpoint format used by the saliency models.

pub mod autograd;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod ops;
pub mod optim;
mod param;
mod scalar;
mod tensor;

pub use autograd::{Gradients, Graph};
pub use error::{Result, TensorError};
pub use param::{Buffer, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tensor::{bit_identical, grad_enabled, no_grad, numel, set_finite_check, Tensor, TensorId};
