//! Token attributions and 2D projections of learned representations.

mod ig;
mod pca;
mod render;

pub use ig::{attribute, integrated_gradients, Attribution, AttributionBaseline, IgOutcome};
pub use pca::{project_2d, write_scatter};
pub use render::{render_ansi, render_attribution, render_html, Rendered};

use thiserror::Error;

use crate::encoder::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("steps must be at least 1")]
    Steps,
    #[error("non-finite gradient at step {step}")]
    NonFinite { step: usize },
    #[error("target class {target} out of range for {n_classes} classes")]
    Target { target: usize, n_classes: usize },
    #[error("projection needs {0}")]
    Projection(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
