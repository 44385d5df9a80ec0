use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// Which loss terms a training step optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Clean cross-entropy only.
    Baseline,
    /// Mean of clean and adversarial cross-entropy.
    AdversarialOnly,
    /// Weighted cross-entropy terms plus NT-Xent.
    ContrastiveAdversarial,
}

/// Sign convention for the FGSM perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FgsmDirection {
    /// `r = +ε·sign(∇)`: moves up the loss surface.
    Ascent,
    /// `r = -ε·sign(∇)`.
    PaperLiteral,
}

impl Mode {
    pub const ALL: [Mode; 3] = [
        Mode::Baseline,
        Mode::AdversarialOnly,
        Mode::ContrastiveAdversarial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::AdversarialOnly => "adversarial_only",
            Mode::ContrastiveAdversarial => "contrastive_adversarial",
        }
    }
}

impl FgsmDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            FgsmDirection::Ascent => "ascent",
            FgsmDirection::PaperLiteral => "paper_literal",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for FgsmDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown mode {s:?}")))
    }
}

impl FromStr for FgsmDirection {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ascent" => Ok(Self::Ascent),
            "paper_literal" => Ok(Self::PaperLiteral),
            _ => Err(TrainError::Config(format!("unknown fgsm_direction {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the contrastive term, in `[0, 1]`.
    pub lambda: f64,
    /// FGSM step size, `>= 0`.
    pub epsilon: f64,
    /// NT-Xent temperature, `> 0`.
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub fgsm_direction: FgsmDirection,
    pub mode: Mode,
}

impl Default for TrainConfig {
    /// Learning rate 1e-5, 10 epochs, batch 16; λ, ε, τ at 0.3, 0.005, 0.07.
    fn default() -> Self {
        Self {
            lambda: 0.3,
            epsilon: 0.005,
            tau: 0.07,
            learning_rate: 1e-5,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            fgsm_direction: FgsmDirection::Ascent,
            mode: Mode::ContrastiveAdversarial,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TrainError::Config(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(TrainError::Config(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(TrainError::Config(format!("tau {} must be > 0", self.tau)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate {} must be >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!(
            "paper_literal".parse::<FgsmDirection>().unwrap(),
            FgsmDirection::PaperLiteral
        );
        assert!("sideways".parse::<FgsmDirection>().is_err());
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn validation_bounds() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig {
                lambda: 1.5,
                ..ok.clone()
            },
            TrainConfig {
                lambda: -0.1,
                ..ok.clone()
            },
            TrainConfig {
                epsilon: -1e-3,
                ..ok.clone()
            },
            TrainConfig {
                tau: 0.0,
                ..ok.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..ok.clone()
            },
            TrainConfig {
                learning_rate: f64::NAN,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        let edges = TrainConfig {
            lambda: 1.0,
            epsilon: 0.0,
            ..ok
        };
        assert!(edges.validate().is_ok());
    }
}
