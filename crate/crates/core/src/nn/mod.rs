//! Small dense-network toolkit with explicit forward/backward passes.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod optim;

pub use checkpoint::{Checkpoint, Tensor, FORMAT_VERSION};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use layers::{
    relu, sigmoid, sigmoid_scalar, softmax, BatchNorm, Dense, Dropout, Layer, Mode, ParamMut,
    Sequential, Trainable,
};
pub use loss::{ClassLoss, FocalConfig, LossGrad, PROB_EPS};
pub use matrix::Matrix;
pub use optim::{Adam, AdamConfig};
