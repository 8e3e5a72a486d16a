//! Objectives, gradients and the optimizer loop.

mod adagrad;
mod estep;
mod exact;
pub mod finite_diff;
mod gradients;
mod jacobian;
mod trainer;

pub use adagrad::{adagrad_step, AdagradState};
pub use estep::{em_gradient, q_objective, EStep};
pub use exact::direct_gradient;
pub use gradients::Gradients;
pub use jacobian::{compose_grad_params, em_gradient_forward, NodeJacobian, SpanJacobians};
pub use trainer::{
    read_checkpoint, train, write_checkpoint, EpochRecord, GradMode, Objective, TrainConfig,
    TrainOutcome, Trainer,
};

use crate::chart::Chart;
use crate::corpus::Sentence;
use crate::error::Result;
use crate::model::ModelParams;

/// Unnormalized negative log-likelihood, `-ln p(W)`.
pub fn sentence_nll(params: &ModelParams, s: &Sentence) -> Result<f64> {
    Ok(-Chart::inside(params, s)?.sentence_log_score())
}
