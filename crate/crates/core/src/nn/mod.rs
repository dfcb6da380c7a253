//! Dense feed-forward substrate with exact reverse-mode gradients.

mod activation;
mod dropout;
pub mod gradcheck;
mod grl;
mod init;
pub mod loss;
mod matrix;
mod mlp;
mod optim;
mod rng;

pub use activation::{elu, elu_grad, Activation};
pub use dropout::{dropout_apply, dropout_matrix};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, LossGraph, SoftmaxMlpGraph};
pub use grl::{grl_backward, grl_forward, GrlMode};
pub use init::he_init;
pub use matrix::Matrix;
pub use mlp::{Dense, Mlp, MlpCache, Mode, ParamKind};
pub use optim::{Adam, Param};
pub use rng::Rng;
