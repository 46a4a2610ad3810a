//! Dense linear algebra, the MLP backbone with analytic gradients, and optimizers.

pub mod gradcheck;
pub mod matrix;
pub mod network;
pub mod optim;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::{dot, l2_norm, Matrix};
pub use network::{
    backward, forward, Activation, Backbone, Classifier, ClassifierGrads, Dense, DenseGrad,
    ForwardPass, LinearHead, Parameters,
};
pub use optim::{adam_step, cosine_lr, sgd_step, AdamState, CosineSchedule, SgdState};
