//! Dense-network substrate shared by the Bayesian and recurrent models.

mod dense;
mod gradcheck;
mod loss;
mod matrix;
mod rng;
mod train;

pub use dense::{
    backward, dense_forward, sgd_update, Activation, BatchOutput, DenseLayer, DenseNet,
    ForwardCache, Gradients, LayerGrads, LayerOutput, NetworkSpec, ParamKind, ParamLocation,
};
pub(crate) use dense::{batch_loss, glorot_matrix, probabilities};
pub use gradcheck::{
    gradient_check, gradient_check_with, relative_error, GradCheckOptions, GradCheckReport,
};
pub use loss::{logistic_loss, softmax, softmax_cross_entropy, softplus, LossKind};
pub use matrix::{axpy, dot, Matrix};
pub use rng::{gaussian_draw, streams, GaussianSource, SeedStream, ZeroNoise};
pub use train::{
    argmax, epoch_batches, evaluate, nll_and_accuracy, train_dense, Dataset, EvalStats, SgdConfig,
};
