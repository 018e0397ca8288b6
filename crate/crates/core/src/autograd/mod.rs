//! Dense tensors, layer kernels with hand-written backward passes, losses and
//! the RMSprop optimizer.

mod loss;
mod ops;
mod optim;
mod tensor;

pub use loss::{
    argmax_rows, cross_entropy, cross_entropy_row, one_hot, softmax, softmax_cross_entropy_grad,
    softmax_row, softmax_t, PROB_FLOOR,
};
pub use ops::{
    batchnorm, batchnorm_backward, batchnorm_infer, conv2d, conv2d_backward, conv_output_dim, dense,
    dense_backward, dropout, dropout_backward, maxpool2d, maxpool2d_backward, relu,
    relu_backward, BatchNormCache, BatchNormConfig, BatchNormGrads, Conv2dGeometry, Conv2dGrads,
    DenseGrads, Mode, RunningStats,
};
pub use optim::{rmsprop_step, RmsPropConfig, RmsPropState, StepSchedule};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutogradError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
}
