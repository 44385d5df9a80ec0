//! Contrastive adversarial training.
//!
//! Each step runs a clean forward pass, takes the gradient of the clean
//! cross-entropy with respect to the embedding matrix, perturbs the matrix
//! with FGSM, runs a second forward pass on the perturbed matrix, and
//! minimizes
//!
//! ```text
//! (1 - λ)/2 · (CE_clean + CE_adv) + λ · NT-Xent(z_clean, z_adv)
//! ```
//!
//! where `z` is the projection-head output for `h_CLS`.

mod config;
mod fgsm;
mod kfold;
mod losses;
mod optim;
mod search;
mod step;
mod trainer;

pub use config::{FgsmDirection, Mode, TrainConfig};
pub use fgsm::{fgsm, Perturbation};
pub use kfold::{kfold_cv, stratified_folds, summarize_folds, CvReport, FoldResult, Folds};
pub use losses::{combined_loss, combined_loss_on_tape, cross_entropy, nt_xent, nt_xent_values, PROB_FLOOR};
pub use optim::Adam;
pub use search::{grid_search, Grid, GridCell};
pub use step::{compute_step, train_step, LossBreakdown, StepOutput};
pub use trainer::{evaluate, pair_cosine, train, EpochRecord, TrainOutcome};

use thiserror::Error;

use crate::encoder::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {term}: {value}")]
    NonFinite { term: &'static str, value: f64 },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
