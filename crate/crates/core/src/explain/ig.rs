use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::encoder::{encode_embeddings, infer, ModelConfig, ModelParams};
use crate::tensor::{Tape, Tensor, Var};
use crate::textprep::{TokenizedExample, Vocab, PAD_ID};

/// Elementwise integrated-gradients result for a scalar function.
#[derive(Debug, Clone, PartialEq)]
pub struct IgOutcome {
    pub attributions: Tensor,
    pub f_input: f64,
    pub f_baseline: f64,
}

impl IgOutcome {
    /// `Σ attributions - (f(input) - f(baseline))`.
    pub fn completeness_gap(&self) -> f64 {
        self.attributions.data().iter().sum::<f64>() - (self.f_input - self.f_baseline)
    }
}

fn eval<F>(f: &F, x: &Tensor, grad: bool) -> Result<(f64, Option<Tensor>), ExplainError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, ExplainError>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone(), grad);
    let out = f(&mut tape, v)?;
    let value = tape.value(out).item();
    if !grad {
        return Ok((value, None));
    }
    tape.backward(out)?;
    let g = tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
    Ok((value, Some(g)))
}

/// Integrated gradients of a scalar function along the straight path from
/// `baseline` to `input`, using the midpoint rule with `steps` points:
///
/// ```text
/// attr = (input - baseline) ⊙ (1/steps) Σₖ ∇f(baseline + αₖ(input - baseline)),
/// αₖ = (k + 1/2)/steps
/// ```
pub fn integrated_gradients<F>(
    f: F,
    input: &Tensor,
    baseline: &Tensor,
    steps: usize,
) -> Result<IgOutcome, ExplainError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, ExplainError>,
{
    if steps == 0 {
        return Err(ExplainError::Steps);
    }
    if input.shape() != baseline.shape() {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "integrated_gradients",
            left: input.shape().to_vec(),
            right: baseline.shape().to_vec(),
        }
        .into());
    }
    let diff: Vec<f64> = input
        .data()
        .iter()
        .zip(baseline.data())
        .map(|(x, b)| x - b)
        .collect();
    let mut total = vec![0.0; diff.len()];
    for step in 0..steps {
        let alpha = (step as f64 + 0.5) / steps as f64;
        let point: Vec<f64> = baseline
            .data()
            .iter()
            .zip(&diff)
            .map(|(b, d)| b + alpha * d)
            .collect();
        let (_, g) = eval(&f, &Tensor::new(input.shape().to_vec(), point)?, true)?;
        let g = g.expect("gradient requested");
        if !g.is_finite() {
            return Err(ExplainError::NonFinite { step });
        }
        for (t, gi) in total.iter_mut().zip(g.data()) {
            *t += gi;
        }
    }
    let attributions = total
        .iter()
        .zip(&diff)
        .map(|(g, d)| g / steps as f64 * d)
        .collect();
    Ok(IgOutcome {
        attributions: Tensor::new(input.shape().to_vec(), attributions)?,
        f_input: eval(&f, input, false)?.0,
        f_baseline: eval(&f, baseline, false)?.0,
    })
}

/// Reference input for token attributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionBaseline {
    /// Every position holds the PAD embedding row.
    #[default]
    Pad,
    Zero,
}

/// Per-token attribution of one example's target-class score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Non-PAD tokens, including the CLS and SEP markers.
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    pub target: usize,
    pub predicted: usize,
    pub label: usize,
    /// Target logit at the input minus at the baseline.
    pub output_delta: f64,
    /// `Σ scores - output_delta`.
    pub completeness_gap: f64,
}

impl Attribution {
    /// `|gap| / |output_delta|`, or `|gap|` when the delta is zero.
    pub fn relative_gap(&self) -> f64 {
        if self.output_delta == 0.0 {
            self.completeness_gap.abs()
        } else {
            (self.completeness_gap / self.output_delta).abs()
        }
    }
}

/// Integrated gradients of the target-class logit (the predicted class when
/// `target` is `None`) with respect to the example's token embeddings.
/// Positive scores support the target class.
pub fn attribute(
    params: &ModelParams,
    config: &ModelConfig,
    example: &TokenizedExample,
    vocab: Option<&Vocab>,
    target: Option<usize>,
    steps: usize,
    baseline: AttributionBaseline,
) -> Result<Attribution, ExplainError> {
    let one = std::slice::from_ref(example);
    let probs = infer(params, config, one)?.probs;
    let row = probs.row(0);
    let predicted = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
    let target = target.unwrap_or(predicted);
    if target >= config.n_classes {
        return Err(ExplainError::Target {
            target,
            n_classes: config.n_classes,
        });
    }
    let ids = example.active_ids().to_vec();
    let len = ids.len();
    let h = config.hidden_size;
    let gather = |id: usize| params.embedding.row(id).to_vec();
    let input = Tensor::new(vec![len, h], ids.iter().flat_map(|&id| gather(id)).collect())?;
    let base = match baseline {
        AttributionBaseline::Pad => {
            Tensor::new(vec![len, h], (0..len).flat_map(|_| gather(PAD_ID)).collect())?
        }
        AttributionBaseline::Zero => Tensor::zeros(&[len, h]),
    };
    let f = |tape: &mut Tape, tokens: Var| -> Result<Var, ExplainError> {
        let w = params.register(tape, false);
        let out = encode_embeddings(tape, &w, config, tokens, &[len], len, None)?;
        let picked = tape.pick_rows(out.logits, &[target])?;
        Ok(tape.sum(picked))
    };
    let ig = integrated_gradients(f, &input, &base, steps)?;
    let scores: Vec<f64> = (0..len).map(|i| ig.attributions.row(i).iter().sum()).collect();
    let tokens = ids
        .iter()
        .map(|&id| match vocab.and_then(|v| v.token(id)) {
            Some(t) => t.to_string(),
            None => format!("#{id}"),
        })
        .collect();
    Ok(Attribution {
        tokens,
        scores,
        target,
        predicted,
        label: example.label,
        output_delta: ig.f_input - ig.f_baseline,
        completeness_gap: ig.completeness_gap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::EncodedText;

    fn linear(w: Vec<f64>) -> impl Fn(&mut Tape, Var) -> Result<Var, ExplainError> {
        move |tape, x| {
            let wv = tape.constant(Tensor::vector(w.clone()).unwrap());
            let p = tape.mul(x, wv)?;
            Ok(tape.sum(p))
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let w = vec![0.5, -2.0, 3.0, 0.25];
        let x = Tensor::vector(vec![1.0, 0.5, -1.5, 4.0]).unwrap();
        let ig = integrated_gradients(linear(w.clone()), &x, &Tensor::zeros(&[4]), 3).unwrap();
        for ((a, w), x) in ig.attributions.data().iter().zip(&w).zip(x.data()) {
            assert!((a - w * x).abs() < 1e-12);
        }
        assert!(ig.completeness_gap().abs() < 1e-12);
    }

    #[test]
    fn input_equal_to_baseline_scores_zero() {
        let x = Tensor::vector(vec![0.3, -0.7]).unwrap();
        let f = |tape: &mut Tape, v: Var| -> Result<Var, ExplainError> {
            let e = tape.exp(v);
            Ok(tape.sum(e))
        };
        let ig = integrated_gradients(f, &x, &x, 8).unwrap();
        assert!(ig.attributions.data().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn nonlinear_completeness_improves_with_steps() {
        let f = |tape: &mut Tape, v: Var| -> Result<Var, ExplainError> {
            let e = tape.exp(v);
            let s = tape.sum(e);
            Ok(tape.log(s))
        };
        let x = Tensor::vector(vec![2.0, -1.0, 0.5]).unwrap();
        let b = Tensor::zeros(&[3]);
        let gaps: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&s| {
                integrated_gradients(f, &x, &b, s)
                    .unwrap()
                    .completeness_gap()
                    .abs()
            })
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0], "{gaps:?}");
        }
        assert!(matches!(
            integrated_gradients(f, &x, &b, 0),
            Err(ExplainError::Steps)
        ));
    }

    #[test]
    fn model_attribution_covers_active_tokens() {
        let cfg = ModelConfig {
            vocab_size: 9,
            hidden_size: 8,
            n_layers: 2,
            n_heads: 2,
            ff_size: 16,
            max_len: 6,
            n_classes: 2,
            proj_size: 4,
            proj_layers: 2,
            dropout: 0.0,
        };
        let p = ModelParams::init(&cfg, 5).unwrap();
        let ex = TokenizedExample::new(
            EncodedText {
                ids: vec![2, 5, 7, 3, 0, 0],
                attention_len: 4,
            },
            1,
            "x",
        );
        let a = attribute(&p, &cfg, &ex, None, None, 64, AttributionBaseline::Pad).unwrap();
        assert_eq!(a.scores.len(), 4);
        assert_eq!(a.tokens, vec!["#2", "#5", "#7", "#3"]);
        assert!(a.relative_gap() < 0.05, "{a:?}");
        assert!(attribute(&p, &cfg, &ex, None, Some(2), 4, AttributionBaseline::Zero).is_err());
    }
}
