use super::TrainError;
use crate::tensor::{Tape, Tensor, Var};

/// Probabilities are clamped to this floor before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Self-similarity mask; its exponential underflows to exactly zero.
const SELF_MASK: f64 = -1e9;

/// Mean negative log-probability of the true class, `-(1/N) Σ log p(yᵢ)`.
pub fn cross_entropy(tape: &mut Tape, probs: Var, labels: &[usize]) -> Result<Var, TrainError> {
    let (_, n_classes) = tape.value(probs).require_matrix("cross_entropy")?;
    if let Some(&label) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(TrainError::LabelOutOfRange { label, n_classes });
    }
    let picked = tape.pick_rows(probs, labels)?;
    let clamped = tape.clamp_min(picked, PROB_FLOOR);
    let logs = tape.log(clamped);
    let mean = tape.mean(logs);
    Ok(tape.scale(mean, -1.0))
}

/// NT-Xent over the pool of `2N` vectors `[z_clean; z_adv]`.
///
/// Anchor `i` has partner `(i + N) mod 2N`; its denominator runs over every
/// other vector in the pool. The result is the mean over all `2N` anchors.
pub fn nt_xent(tape: &mut Tape, z_clean: Var, z_adv: Var, tau: f64) -> Result<Var, TrainError> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(TrainError::Config(format!("tau {tau} must be > 0")));
    }
    let (n, _) = tape.value(z_clean).require_matrix("nt_xent")?;
    if tape.shape(z_adv) != tape.shape(z_clean) {
        return Err(TrainError::Tensor(crate::tensor::TensorError::ShapeMismatch {
            op: "nt_xent",
            left: tape.shape(z_clean).to_vec(),
            right: tape.shape(z_adv).to_vec(),
        }));
    }
    let pool = tape.concat_rows(&[z_clean, z_adv])?;
    let unit = tape.normalize_rows(pool)?;
    let unit_t = tape.transpose(unit)?;
    let cos = tape.matmul(unit, unit_t)?;
    let logits = tape.scale(cos, 1.0 / tau);
    let m = 2 * n;
    let mut mask = Tensor::zeros(&[m, m]);
    for i in 0..m {
        mask.data_mut()[i * m + i] = SELF_MASK;
    }
    let mask = tape.constant(mask);
    let masked = tape.add(logits, mask)?;
    let log_p = tape.log_softmax(masked, 1)?;
    let partners: Vec<usize> = (0..m).map(|i| (i + n) % m).collect();
    let picked = tape.pick_rows(log_p, &partners)?;
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -1.0))
}

/// [`nt_xent`] on plain values.
pub fn nt_xent_values(z_clean: &Tensor, z_adv: &Tensor, tau: f64) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let a = tape.constant(z_clean.clone());
    let b = tape.constant(z_adv.clone());
    let loss = nt_xent(&mut tape, a, b, tau)?;
    Ok(tape.value(loss).item())
}

/// `(1 - λ)/2 · (ce_clean + ce_adv) + λ · contrastive`.
pub fn combined_loss(ce_clean: f64, ce_adv: f64, contrastive: f64, lambda: f64) -> f64 {
    (1.0 - lambda) / 2.0 * (ce_clean + ce_adv) + lambda * contrastive
}

/// [`combined_loss`] on the tape, with the same floating-point operations.
pub fn combined_loss_on_tape(
    tape: &mut Tape,
    ce_clean: Var,
    ce_adv: Var,
    contrastive: Var,
    lambda: f64,
) -> Result<Var, TrainError> {
    let ce = tape.add(ce_clean, ce_adv)?;
    let ce = tape.scale(ce, (1.0 - lambda) / 2.0);
    let ctr = tape.scale(contrastive, lambda);
    Ok(tape.add(ce, ctr)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ce_of(rows: &[Vec<f64>], labels: &[usize]) -> Result<f64, TrainError> {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(rows).unwrap());
        let loss = cross_entropy(&mut tape, p, labels)?;
        Ok(tape.value(loss).item())
    }

    #[test]
    fn cross_entropy_fixtures() {
        assert_eq!(ce_of(&[vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        assert!((ce_of(&[vec![0.5, 0.5]], &[0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let two = ce_of(&[vec![0.1, 0.9], vec![0.8, 0.2]], &[1, 0]).unwrap();
        assert!((two - 0.164_252_033_486_018).abs() < 1e-12, "{two}");
    }

    #[test]
    fn cross_entropy_clamps_and_checks_labels() {
        let v = ce_of(&[vec![1.0, 0.0]], &[1]).unwrap();
        assert!((v - 12.0 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!(matches!(
            ce_of(&[vec![0.5, 0.5]], &[2]),
            Err(TrainError::LabelOutOfRange {
                label: 2,
                n_classes: 2
            })
        ));
    }

    /// Explicit double loop over all anchors and candidates.
    fn brute_nt_xent(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> f64 {
        let pool: Vec<&Vec<f64>> = a.iter().chain(b.iter()).collect();
        let n = a.len();
        let cos = |u: &[f64], v: &[f64]| {
            let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (nu * nv)
        };
        let mut total = 0.0;
        for i in 0..2 * n {
            let partner = (i + n) % (2 * n);
            let mut denom = 0.0;
            for k in 0..2 * n {
                if k != i {
                    denom += (cos(pool[i], pool[k]) / tau).exp();
                }
            }
            total += -((cos(pool[i], pool[partner]) / tau).exp() / denom).ln();
        }
        total / (2 * n) as f64
    }

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn nt_xent_fixtures() {
        let z = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let at1 = nt_xent_values(&t(&z), &t(&z), 1.0).unwrap();
        assert!((at1 - 0.551_444_713_932_051_1).abs() < 1e-12, "{at1}");
        let at_half = nt_xent_values(&t(&z), &t(&z), 0.5).unwrap();
        assert!((at_half - 0.239_544_766_221_884_53).abs() < 1e-12, "{at_half}");
        assert!((at_half - (1.0 + 2.0 / 1f64.exp().powi(2)).ln()).abs() < 1e-14);
        let single = nt_xent_values(&t(&[vec![0.3, -2.0]]), &t(&[vec![5.0, 1.0]]), 0.07).unwrap();
        assert_eq!(single, 0.0);
    }

    #[test]
    fn nt_xent_rejects_degenerate_input() {
        let zero = t(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let ok = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            nt_xent_values(&zero, &ok, 1.0),
            Err(TrainError::Tensor(crate::tensor::TensorError::Degenerate { .. }))
        ));
        assert!(nt_xent_values(&ok, &t(&[vec![1.0, 0.0]]), 1.0).is_err());
    }

    #[test]
    fn nt_xent_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 4, 8] {
            for _ in 0..25 {
                let d = rng.gen_range(2..6);
                let tau = rng.gen_range(0.05..1.0);
                let mut draw = || -> Vec<Vec<f64>> {
                    (0..n)
                        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .collect()
                };
                let a = draw();
                let b = draw();
                let got = nt_xent_values(&t(&a), &t(&b), tau).unwrap();
                let want = brute_nt_xent(&a, &b, tau);
                assert!((got - want).abs() < 1e-10, "n={n} got {got} want {want}");
            }
        }
    }

    #[test]
    fn nt_xent_gradient_matches_numeric() {
        use crate::tensor::grad_check;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut draw =
            |r, c| Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let inputs = vec![draw(3, 4), draw(3, 4)];
        let report = grad_check(
            |tape, v| {
                nt_xent(tape, v[0], v[1], 0.3).map_err(|e| match e {
                    TrainError::Tensor(t) => t,
                    other => panic!("{other}"),
                })
            },
            &inputs,
            1e-6,
            1e-5,
        )
        .unwrap();
        assert!(report.passed, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn combined_fixtures() {
        assert_eq!(combined_loss(1.0, 3.0, 7.0, 0.0), 2.0);
        assert_eq!(combined_loss(1.5, 9.25, 7.0, 1.0), 7.0);
        assert!((combined_loss(1.0, 3.0, 5.0, 0.4) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn tape_combination_is_bitwise_equal() {
        for &(a, b, c, l) in &[(0.7, 1.3, 2.9, 0.3), (1.0, 3.0, 7.0, 0.0), (0.1, 0.2, 0.3, 1.0)] {
            let mut tape = Tape::new();
            let va = tape.constant(Tensor::scalar(a));
            let vb = tape.constant(Tensor::scalar(b));
            let vc = tape.constant(Tensor::scalar(c));
            let out = combined_loss_on_tape(&mut tape, va, vb, vc, l).unwrap();
            assert_eq!(tape.value(out).item(), combined_loss(a, b, c, l));
        }
    }

    fn pairs() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (1usize..6)
            .prop_flat_map(|n| {
                let row = prop::collection::vec(0.1f64..2.0, 3).prop_map(|mut v| {
                    // keep rows away from zero norm
                    v[0] += 0.5;
                    v
                });
                let signed = prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), n);
                (prop::collection::vec(row, n), signed)
            })
            .prop_map(|(a, b)| {
                let b = b
                    .into_iter()
                    .map(|mut r| {
                        r[1] += 2.0;
                        r
                    })
                    .collect();
                (a, b)
            })
    }

    proptest! {
        #[test]
        fn pair_permutation_invariance((a, b) in pairs(), shift in 0usize..5) {
            let n = a.len();
            let base = nt_xent_values(&t(&a), &t(&b), 0.2).unwrap();
            let pa: Vec<_> = (0..n).map(|i| a[(i + shift) % n].clone()).collect();
            let pb: Vec<_> = (0..n).map(|i| b[(i + shift) % n].clone()).collect();
            let permuted = nt_xent_values(&t(&pa), &t(&pb), 0.2).unwrap();
            prop_assert!((base - permuted).abs() < 1e-10);
        }

        #[test]
        fn rotation_invariance((a, b) in pairs(), theta in 0.0f64..std::f64::consts::TAU) {
            let (s, c) = theta.sin_cos();
            let rot = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
                rows.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]]).collect()
            };
            let base = nt_xent_values(&t(&a), &t(&b), 0.5).unwrap();
            let rotated = nt_xent_values(&t(&rot(&a)), &t(&rot(&b)), 0.5).unwrap();
            prop_assert!((base - rotated).abs() < 1e-10);
        }

        #[test]
        fn symmetric_in_its_arguments((a, b) in pairs()) {
            let ab = nt_xent_values(&t(&a), &t(&b), 0.1).unwrap();
            let ba = nt_xent_values(&t(&b), &t(&a), 0.1).unwrap();
            prop_assert!((ab - ba).abs() < 1e-10);
        }
    }
}
