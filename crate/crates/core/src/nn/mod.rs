//! Layer engine: forward/backward passes, losses, optimizers, training, checkpoints
//! and the finite-difference verifier.

mod checkpoint;
mod gradcheck;
mod layers;
mod model;
mod optim;
mod tensor;
mod train;

pub use checkpoint::{checkpoint_load, checkpoint_save, MAGIC, VERSION};
pub use gradcheck::{finite_diff_check, GradCheckReport, KindReport, GRAD_FLOOR};
pub use layers::{
    cross_entropy, dropout_mask, global_pool_backward, global_pool_forward, maxpool_backward,
    maxpool_forward, softmax, Activation, BatchNorm, BnCache, Conv2d, Dense, Fingerprint,
    BN_EPS, BN_MOMENTUM, LRELU_SLOPE,
};
pub use model::{BodyLayer, ConvBlock, ForwardPass, Grads, Head, Mode, ModelState, ParamKind};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, OPT_EPS, RMSPROP_DECAY};
pub use tensor::Tensor;
pub use train::{evaluate_loss_accuracy, train, TrainReport};
pub(crate) use train::argmax;
