//! Finite-difference check of the classification loss with respect to the
//! token embedding matrix, through the whole encoder.

use crate::tensor::{grad_check, GradCheckReport, Tape, TensorError, Var};
use crate::textprep::TokenizedExample;

use super::model::check_batch;
use super::{forward, ModelConfig, ModelError, ModelParams};

/// Mean cross-entropy of `batch` as a function of `E` alone, every other
/// weight held fixed, checked against central differences.
pub fn embedding_gradient_check(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[TokenizedExample],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, ModelError> {
    check_batch(config, batch)?;
    if let Some(ex) = batch.iter().find(|ex| ex.label >= config.n_classes) {
        return Err(ModelError::Config(format!("label {} out of range", ex.label)));
    }
    let labels: Vec<usize> = batch.iter().map(|ex| ex.label).collect();
    let loss = |tape: &mut Tape, v: &[Var]| -> Result<Var, TensorError> {
        let mut w = params.register(tape, false);
        w.embedding = v[0];
        let out = forward(tape, &w, config, batch, None).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => TensorError::Degenerate {
                op: "forward",
                reason: other.to_string(),
            },
        })?;
        let lp = tape.log_softmax(out.logits, 1)?;
        let picked = tape.pick_rows(lp, &labels)?;
        let m = tape.mean(picked);
        Ok(tape.scale(m, -1.0))
    };
    Ok(grad_check(
        loss,
        std::slice::from_ref(&params.embedding),
        step,
        tolerance,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::project;
    use crate::tensor::Tensor;
    use crate::textprep::{CLS_ID, PAD_ID, SEP_ID};

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 14,
            hidden_size: 8,
            n_layers: 2,
            n_heads: 2,
            ff_size: 16,
            max_len: 8,
            n_classes: 2,
            proj_size: 4,
            proj_layers: 2,
            dropout: 0.0,
        }
    }

    fn example(words: &[usize], label: usize) -> TokenizedExample {
        let mut ids = vec![CLS_ID];
        ids.extend_from_slice(words);
        ids.push(SEP_ID);
        let attention_len = ids.len();
        ids.resize(8, PAD_ID);
        TokenizedExample {
            ids,
            attention_len,
            label,
            disease: "synthetic".into(),
        }
    }

    fn batch() -> Vec<TokenizedExample> {
        vec![
            example(&[4, 5, 6], 0),
            example(&[7, 8], 1),
            example(&[9, 4, 10, 11, 12], 1),
        ]
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let c = cfg();
        for seed in [1, 2] {
            let mut p = ModelParams::init(&c, seed).unwrap();
            // Larger embeddings make the gradient non-trivial in every row.
            p.embedding = p.embedding.map(|x| x * 20.0);
            let r = embedding_gradient_check(&p, &c, &batch(), 1e-5, 1e-4).unwrap();
            assert!(r.passed, "seed {seed}: {:?}", r.worst());
            let largest = r.entries.iter().map(|e| e.analytic.abs()).fold(0.0, f64::max);
            assert!(largest > 1e-3, "{largest}");
        }
    }

    #[test]
    fn bad_label_is_rejected() {
        let c = cfg();
        let p = ModelParams::init(&c, 1).unwrap();
        assert!(embedding_gradient_check(&p, &c, &[example(&[4], 2)], 1e-5, 1e-4).is_err());
    }

    #[test]
    fn projection_gradient_with_respect_to_h_cls() {
        let c = cfg();
        let p = ModelParams::init(&c, 3).unwrap();
        let h = Tensor::new(
            vec![2, 8],
            (0..16).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect(),
        )
        .unwrap();
        let r = grad_check(
            |t: &mut Tape, v: &[Var]| {
                let w = p.register(t, false);
                let z = project(t, &w, v[0]).map_err(|e| TensorError::Degenerate {
                    op: "project",
                    reason: e.to_string(),
                })?;
                let sq = t.mul(z, z)?;
                Ok(t.sum(sq))
            },
            &[h],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(r.passed, "{:?}", r.worst());
    }
}
