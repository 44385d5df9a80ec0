//! Central-difference verification of analytic gradients.

use super::{Result, Tape, Tensor, Var};

/// Relative errors are computed against `max(|analytic|, |numeric|, DENOM_FLOOR)`,
/// so gradients near zero are effectively compared in absolute terms.
const DENOM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.rel_error >= self.tolerance)
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Central differences `(f(x+h) - f(x-h)) / 2h`, one element at a time.
pub fn numerical_gradient<F>(f: &F, inputs: &[Tensor], step: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut work = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = evaluate(f, &work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = evaluate(f, &work)?;
            work[k].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        grads.push(g);
    }
    Ok(grads)
}

pub fn compare_gradients(analytic: &[Tensor], numeric: &[Tensor], tolerance: f64) -> GradCheckReport {
    let mut entries = Vec::new();
    for (input, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (index, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let denom = av.abs().max(nv.abs()).max(DENOM_FLOOR);
            entries.push(GradCheckEntry {
                input,
                index,
                analytic: av,
                numeric: nv,
                rel_error: (av - nv).abs() / denom,
            });
        }
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    let shapes_match =
        analytic.len() == numeric.len() && analytic.iter().zip(numeric).all(|(a, n)| a.shape() == n.shape());
    GradCheckReport {
        passed: shapes_match && max_rel_error < tolerance && entries.iter().all(|e| e.rel_error.is_finite()),
        entries,
        max_rel_error,
        tolerance,
    }
}

/// Analytic gradients of the scalar `f` with respect to each input.
pub fn analytic_gradient<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect())
}

/// Compares tape gradients of `f` against central differences with the given step.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradient(&f, inputs)?;
    let numeric = numerical_gradient(&f, inputs, step)?;
    Ok(compare_gradients(&analytic, &numeric, tolerance))
}
