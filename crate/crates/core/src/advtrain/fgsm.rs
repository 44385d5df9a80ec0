use super::{FgsmDirection, TrainError};
use crate::tensor::{sign, Tensor};

/// Embedding perturbation; every element is `-ε`, `0` or `+ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub r: Tensor,
    pub epsilon: f64,
}

impl Perturbation {
    /// `max |r|`: `ε` when any gradient element was nonzero, otherwise 0.
    pub fn linf(&self) -> f64 {
        self.r.max_abs()
    }
}

/// Fast gradient sign step `±ε·sign(grad)`, with `sign(0) = 0`.
pub fn fgsm(grad: &Tensor, epsilon: f64, direction: FgsmDirection) -> Result<Perturbation, TrainError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(TrainError::Config(format!("epsilon {epsilon} must be >= 0")));
    }
    let step = match direction {
        FgsmDirection::Ascent => epsilon,
        FgsmDirection::PaperLiteral => -epsilon,
    };
    Ok(Perturbation {
        r: grad.map(|g| step * sign(g)),
        epsilon,
    })
}
