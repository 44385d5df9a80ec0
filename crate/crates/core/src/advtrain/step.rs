use serde::{Deserialize, Serialize};

use super::{
    combined_loss_on_tape, cross_entropy, fgsm, nt_xent, Adam, Mode, Perturbation, TrainConfig, TrainError,
};
use crate::encoder::{forward, project, Dropout, ModelConfig, ModelParams, Weights};
use crate::tensor::{Tape, Tensor, Var};
use crate::textprep::TokenizedExample;

/// Loss terms of one step. Terms a mode does not compute are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_clean: f64,
    pub ce_adv: Option<f64>,
    pub contrastive: Option<f64>,
    pub combined: f64,
}

/// Losses and parameter gradients of one step, before the update.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub losses: LossBreakdown,
    pub grads: ModelParams,
    /// The perturbation used for the adversarial pass, if any.
    pub perturbation: Option<Perturbation>,
}

fn finite(tape: &Tape, v: Var, term: &'static str) -> Result<f64, TrainError> {
    let value = tape.value(v).item();
    if value.is_finite() {
        Ok(value)
    } else {
        Err(TrainError::NonFinite { term, value })
    }
}

/// Runs both passes and the backward sweep without touching `params`.
///
/// The perturbation is added to the embedding matrix on the tape as a
/// constant, so the stored matrix never changes and no gradient flows
/// through the sign.
pub fn compute_step(
    params: &ModelParams,
    model: &ModelConfig,
    config: &TrainConfig,
    batch: &[TokenizedExample],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<StepOutput, TrainError> {
    let mut tape = Tape::new();
    let w = params.register(&mut tape, true);
    let labels: Vec<usize> = batch.iter().map(|ex| ex.label).collect();

    let clean = forward(&mut tape, &w, model, batch, dropout.as_deref_mut())?;
    let ce_clean = cross_entropy(&mut tape, clean.probs, &labels)?;
    let ce_clean_value = finite(&tape, ce_clean, "ce_clean")?;
    tape.backward(ce_clean)?;

    if config.mode == Mode::Baseline {
        return Ok(StepOutput {
            losses: LossBreakdown {
                ce_clean: ce_clean_value,
                ce_adv: None,
                contrastive: None,
                combined: ce_clean_value,
            },
            grads: w.grads(&tape),
            perturbation: None,
        });
    }

    let grad_e = tape
        .grad(w.embedding)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(params.embedding.shape()));
    tape.zero_grad();
    let perturbation = fgsm(&grad_e, config.epsilon, config.fgsm_direction)?;
    let r = tape.constant(perturbation.r.clone());
    let perturbed = tape.add(w.embedding, r)?;
    let w_adv = Weights {
        embedding: perturbed,
        ..w.clone()
    };
    let adv = forward(&mut tape, &w_adv, model, batch, dropout)?;
    let ce_adv = cross_entropy(&mut tape, adv.probs, &labels)?;
    let ce_adv_value = finite(&tape, ce_adv, "ce_adv")?;

    let (combined, contrastive) = match config.mode {
        Mode::AdversarialOnly => {
            let sum = tape.add(ce_clean, ce_adv)?;
            (tape.scale(sum, 0.5), None)
        }
        _ => {
            let z_clean = project(&mut tape, &w, clean.h_cls)?;
            let z_adv = project(&mut tape, &w, adv.h_cls)?;
            let ctr = nt_xent(&mut tape, z_clean, z_adv, config.tau)?;
            let ctr_value = finite(&tape, ctr, "contrastive")?;
            let combined = combined_loss_on_tape(&mut tape, ce_clean, ce_adv, ctr, config.lambda)?;
            (combined, Some(ctr_value))
        }
    };
    let combined_value = finite(&tape, combined, "combined")?;
    tape.backward(combined)?;
    Ok(StepOutput {
        losses: LossBreakdown {
            ce_clean: ce_clean_value,
            ce_adv: Some(ce_adv_value),
            contrastive,
            combined: combined_value,
        },
        grads: w.grads(&tape),
        perturbation: Some(perturbation),
    })
}

/// One optimization step on `batch`: losses, gradients, then an Adam update
/// of `params` in place.
pub fn train_step(
    params: &mut ModelParams,
    optimizer: &mut Adam,
    model: &ModelConfig,
    config: &TrainConfig,
    batch: &[TokenizedExample],
    dropout: Option<&mut Dropout<'_>>,
) -> Result<LossBreakdown, TrainError> {
    let out = compute_step(params, model, config, batch, dropout)?;
    optimizer.step(params, &out.grads, config.learning_rate)?;
    Ok(out.losses)
}
