//! Contrastive adversarial training for short-text classification.
//!
//! The pipeline: [`textprep`] cleans and tokenizes text, [`encoder`] is a
//! small pre-norm transformer with classification and projection heads,
//! and [`advtrain`] trains it on pairs of clean and FGSM-perturbed inputs
//! with a weighted sum of two cross-entropy terms and an NT-Xent term.
//! [`metrics`], [`explain`] and [`dataio`] cover evaluation, attribution
//! and corpus handling.

pub mod advtrain;
pub mod dataio;
pub mod encoder;
pub mod explain;
pub mod metrics;
pub mod tensor;
pub mod textprep;
