use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, fgsm, train_step, Adam, LossBreakdown, TrainConfig, TrainError};
use crate::encoder::{forward, predict, project, Dropout, ModelConfig, ModelParams, Weights};
use crate::metrics::{score, Prf};
use crate::tensor::Tape;
use crate::textprep::TokenizedExample;

/// Dropout masks come from their own stream so they never shift the
/// shuffling sequence.
const DROPOUT_STREAM: u64 = 1 << 32;

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub ce_clean: f64,
    pub ce_adv: Option<f64>,
    pub ctr: Option<f64>,
    pub combined: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
    /// Mean cosine between clean and adversarial projections on the
    /// validation set after this epoch.
    pub pair_cosine: f64,
}

impl EpochRecord {
    pub fn val(&self) -> Prf {
        Prf {
            precision: self.val_precision,
            recall: self.val_recall,
            f1: self.val_f1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch with the highest validation F1; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    /// Parameters after `best_epoch` (the initial ones when no epoch ran).
    pub best_params: ModelParams,
    pub final_params: ModelParams,
    /// Pair cosine of the untrained parameters.
    pub initial_pair_cosine: f64,
}

impl TrainOutcome {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|e| &self.history[e - 1])
    }
}

/// Precision, recall and F1 of `params` on `examples`.
pub fn evaluate(
    params: &ModelParams,
    model: &ModelConfig,
    examples: &[TokenizedExample],
    batch_size: usize,
) -> Result<Prf, TrainError> {
    let preds = predict(params, model, examples, batch_size)?;
    let labels: Vec<usize> = examples.iter().map(|ex| ex.label).collect();
    Ok(score(&preds, &labels, model.n_classes))
}

/// Mean cosine similarity between each example's clean projection and the
/// projection of its FGSM-perturbed pass, using the config's `ε` and
/// direction.
pub fn pair_cosine(
    params: &ModelParams,
    model: &ModelConfig,
    config: &TrainConfig,
    examples: &[TokenizedExample],
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for chunk in examples.chunks(config.batch_size.max(1)) {
        let mut tape = Tape::new();
        let w = params.register(&mut tape, true);
        let labels: Vec<usize> = chunk.iter().map(|ex| ex.label).collect();
        let clean = forward(&mut tape, &w, model, chunk, None)?;
        let ce = cross_entropy(&mut tape, clean.probs, &labels)?;
        tape.backward(ce)?;
        let grad = match tape.grad(w.embedding) {
            Some(g) => g.clone(),
            None => crate::tensor::Tensor::zeros(params.embedding.shape()),
        };
        let r = fgsm(&grad, config.epsilon, config.fgsm_direction)?;
        let r = tape.constant(r.r);
        let perturbed = tape.add(w.embedding, r)?;
        let w_adv = Weights {
            embedding: perturbed,
            ..w.clone()
        };
        let adv = forward(&mut tape, &w_adv, model, chunk, None)?;
        let z = project(&mut tape, &w, clean.h_cls)?;
        let z_adv = project(&mut tape, &w, adv.h_cls)?;
        let (a, b) = (tape.value(z), tape.value(z_adv));
        for i in 0..a.rows() {
            total += cosine(a.row(i), b.row(i));
        }
    }
    Ok(total / examples.len().max(1) as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean_losses(steps: &[LossBreakdown]) -> (f64, Option<f64>, Option<f64>, f64) {
    let n = steps.len() as f64;
    let avg = |f: &dyn Fn(&LossBreakdown) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = steps.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / n)
    };
    (
        avg(&|s| Some(s.ce_clean)).unwrap_or(0.0),
        avg(&|s| s.ce_adv),
        avg(&|s| s.contrastive),
        avg(&|s| Some(s.combined)).unwrap_or(0.0),
    )
}

/// Trains a copy of `initial` for `config.epochs` epochs.
///
/// Epoch `e` shuffles the training set with a ChaCha8 generator seeded by
/// `config.seed` on stream `e`, so any epoch's order can be reproduced on
/// its own. The last partial batch is kept.
pub fn train(
    initial: &ModelParams,
    model: &ModelConfig,
    config: &TrainConfig,
    train_set: &[TokenizedExample],
    val_set: &[TokenizedExample],
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    let mut params = initial.clone();
    let mut best_params = initial.clone();
    let mut best: Option<(usize, f64)> = None;
    let mut optimizer = Adam::new();
    let mut history = Vec::with_capacity(config.epochs);
    let initial_pair_cosine = pair_cosine(&params, model, config, val_set)?;
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut steps = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TokenizedExample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let mut dropout = Dropout {
                rate: model.dropout,
                rng: &mut dropout_rng,
            };
            steps.push(train_step(
                &mut params,
                &mut optimizer,
                model,
                config,
                &batch,
                Some(&mut dropout),
            )?);
        }
        let (ce_clean, ce_adv, ctr, combined) = mean_losses(&steps);
        let val = evaluate(&params, model, val_set, config.batch_size.max(32))?;
        let record = EpochRecord {
            epoch,
            ce_clean,
            ce_adv,
            ctr,
            combined,
            val_precision: val.precision,
            val_recall: val.recall,
            val_f1: val.f1,
            pair_cosine: pair_cosine(&params, model, config, val_set)?,
        };
        log::info!(
            "epoch {epoch}: loss {combined:.5} val f1 {:.4} pair cosine {:.4}",
            val.f1,
            record.pair_cosine
        );
        if best.is_none_or(|(_, f1)| val.f1 > f1) {
            best = Some((epoch, val.f1));
            best_params = params.clone();
        }
        history.push(record);
    }

    Ok(TrainOutcome {
        history,
        best_epoch: best.map(|(e, _)| e),
        best_params,
        final_params: params,
        initial_pair_cosine,
    })
}
