//! Finite-difference checks over every differentiable tape operation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, GradCheckReport, Result, Tape, Tensor, Var};

pub const SUITE_STEP: f64 = 1e-5;
pub const SUITE_TOLERANCE: f64 = 1e-4;

type Case = (
    &'static str,
    Vec<Tensor>,
    Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>,
);

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Values in `±[lo, hi]`, keeping clear of kinks at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let t = random(rng, shape, lo, hi);
    let signs = random(rng, shape, -1.0, 1.0);
    let data = t
        .data()
        .iter()
        .zip(signs.data())
        .map(|(&v, &s)| if s < 0.0 { -v } else { v })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Reduces `y` to a scalar with fixed random weights so that every output
/// element contributes a distinct amount.
fn weighted(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, t.shape(y), -1.0, 1.0);
    let w = t.constant(w);
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

fn cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let m = |rng: &mut ChaCha8Rng, r: usize, c: usize| random(rng, &[r, c], -1.0, 1.0);
    vec![
        (
            "add",
            vec![m(rng, 3, 4), m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.add(v[0], v[1])?;
                weighted(t, y, 1)
            }),
        ),
        (
            "sub",
            vec![m(rng, 3, 4), m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.sub(v[0], v[1])?;
                weighted(t, y, 2)
            }),
        ),
        (
            "mul",
            vec![m(rng, 3, 4), m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.mul(v[0], v[1])?;
                weighted(t, y, 3)
            }),
        ),
        (
            "scale",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.scale(v[0], -1.7);
                weighted(t, y, 4)
            }),
        ),
        (
            "add_bias",
            vec![m(rng, 3, 4), random(rng, &[4], -1.0, 1.0)],
            Box::new(|t, v| {
                let y = t.add_bias(v[0], v[1])?;
                weighted(t, y, 5)
            }),
        ),
        (
            "matmul",
            vec![m(rng, 3, 4), m(rng, 4, 2)],
            Box::new(|t, v| {
                let y = t.matmul(v[0], v[1])?;
                weighted(t, y, 6)
            }),
        ),
        (
            "transpose",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.transpose(v[0])?;
                weighted(t, y, 7)
            }),
        ),
        (
            "reshape",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.reshape(v[0], vec![2, 6])?;
                weighted(t, y, 8)
            }),
        ),
        (
            "gather_rows",
            vec![m(rng, 5, 3)],
            Box::new(|t, v| {
                let y = t.gather_rows(v[0], &[4, 0, 4, 2])?;
                weighted(t, y, 9)
            }),
        ),
        (
            "slice",
            vec![m(rng, 4, 5)],
            Box::new(|t, v| {
                let y = t.slice(v[0], 1, 2, 1, 3)?;
                weighted(t, y, 10)
            }),
        ),
        (
            "concat_rows",
            vec![m(rng, 2, 3), m(rng, 1, 3)],
            Box::new(|t, v| {
                let y = t.concat_rows(&[v[0], v[1], v[0]])?;
                weighted(t, y, 11)
            }),
        ),
        (
            "concat_cols",
            vec![m(rng, 3, 2), m(rng, 3, 1)],
            Box::new(|t, v| {
                let y = t.concat_cols(&[v[1], v[0]])?;
                weighted(t, y, 12)
            }),
        ),
        (
            "softmax_rows",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.softmax(v[0], 1)?;
                weighted(t, y, 13)
            }),
        ),
        (
            "softmax_columns",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.softmax(v[0], 0)?;
                weighted(t, y, 14)
            }),
        ),
        (
            "log_softmax",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.log_softmax(v[0], 1)?;
                weighted(t, y, 15)
            }),
        ),
        (
            "layer_norm",
            vec![
                m(rng, 3, 8),
                random(rng, &[8], 0.5, 1.5),
                random(rng, &[8], -0.5, 0.5),
            ],
            Box::new(|t, v| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                weighted(t, y, 16)
            }),
        ),
        (
            "gelu",
            vec![random(rng, &[3, 4], -3.0, 3.0)],
            Box::new(|t, v| {
                let y = t.gelu(v[0]);
                weighted(t, y, 17)
            }),
        ),
        (
            "relu",
            vec![away_from_zero(rng, &[3, 4], 0.1, 2.0)],
            Box::new(|t, v| {
                let y = t.relu(v[0]);
                weighted(t, y, 18)
            }),
        ),
        (
            "log",
            vec![random(rng, &[3, 4], 0.2, 3.0)],
            Box::new(|t, v| {
                let y = t.log(v[0]);
                weighted(t, y, 19)
            }),
        ),
        (
            "exp",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.exp(v[0]);
                weighted(t, y, 20)
            }),
        ),
        (
            "clamp_min",
            vec![away_from_zero(rng, &[3, 4], 0.1, 2.0)],
            Box::new(|t, v| {
                let y = t.clamp_min(v[0], 0.0);
                weighted(t, y, 21)
            }),
        ),
        (
            "sum",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let s = t.sum(v[0]);
                let sq = t.mul(s, s)?;
                Ok(sq)
            }),
        ),
        (
            "mean",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let s = t.mean(v[0]);
                let e = t.exp(s);
                Ok(e)
            }),
        ),
        (
            "pick_rows",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.pick_rows(v[0], &[3, 0, 2])?;
                weighted(t, y, 22)
            }),
        ),
        (
            "cosine_similarity",
            vec![random(rng, &[5], -1.0, 1.0), random(rng, &[5], -1.0, 1.0)],
            Box::new(|t, v| {
                let c = t.cosine_similarity(v[0], v[1])?;
                let e = t.exp(c);
                Ok(e)
            }),
        ),
        (
            "normalize_rows",
            vec![m(rng, 3, 4)],
            Box::new(|t, v| {
                let y = t.normalize_rows(v[0])?;
                weighted(t, y, 23)
            }),
        ),
    ]
}

/// Runs a central-difference check of every differentiable operation on
/// random inputs drawn from `seed`. Each entry is one operation.
pub fn op_gradient_suite(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases(&mut rng)
        .into_iter()
        .map(|(name, inputs, f)| Ok((name, grad_check(f, &inputs, SUITE_STEP, SUITE_TOLERANCE)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_on_several_seeds() {
        for seed in 0..3 {
            for (name, report) in op_gradient_suite(seed).unwrap() {
                assert!(report.passed, "{name} seed {seed}: {:?}", report.worst());
            }
        }
    }

    #[test]
    fn matmul_sum_gradient_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&mut rng, &[3, 4], -1.0, 1.0);
        let b = random(&mut rng, &[4, 2], -1.0, 1.0);
        let report = grad_check(
            |t: &mut Tape, v: &[Var]| {
                let y = t.matmul(v[0], v[1])?;
                Ok(t.sum(y))
            },
            &[a, b],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed, "{:?}", report.worst());
    }

    #[test]
    fn layer_norm_over_an_eight_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random(&mut rng, &[1, 8], -2.0, 2.0);
        let g = Tensor::filled(&[8], 1.0);
        let b = Tensor::zeros(&[8]);
        let report = grad_check(
            |t: &mut Tape, v: &[Var]| {
                let y = t.layer_norm(v[0], v[1], v[2])?;
                weighted(t, y, 40)
            },
            &[x, g, b],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{:?}", report.worst());
    }

    #[test]
    fn two_layer_network_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inputs = vec![
            random(&mut rng, &[5, 4], -1.0, 1.0),
            random(&mut rng, &[4, 6], -0.8, 0.8),
            random(&mut rng, &[6], -0.1, 0.1),
            random(&mut rng, &[6, 3], -0.8, 0.8),
            random(&mut rng, &[3], -0.1, 0.1),
        ];
        let report = grad_check(
            |t: &mut Tape, v: &[Var]| {
                let h = t.matmul(v[0], v[1])?;
                let h = t.add_bias(h, v[2])?;
                let h = t.gelu(h);
                let o = t.matmul(h, v[3])?;
                let o = t.add_bias(o, v[4])?;
                let lp = t.log_softmax(o, 1)?;
                let picked = t.pick_rows(lp, &[0, 2, 1, 1, 0])?;
                let m = t.mean(picked);
                Ok(t.scale(m, -1.0))
            },
            &inputs,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{:?}", report.worst());
    }
}
