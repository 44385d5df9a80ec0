use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainError};
use crate::encoder::{ModelConfig, ModelParams};
use crate::metrics::Prf;
use crate::textprep::TokenizedExample;

/// Value lists for the swept hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub taus: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Grid {
    /// λ ∈ {0.1..0.5}, ε ∈ {0.02, 0.005, 0.001, 0.0001}, τ ∈ {0.05..0.1},
    /// batch size ∈ {16, 24, 32}.
    pub fn full() -> Self {
        Self {
            lambdas: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            epsilons: vec![0.02, 0.005, 0.001, 0.0001],
            taus: vec![0.05, 0.06, 0.07, 0.08, 0.09, 0.1],
            batch_sizes: vec![16, 24, 32],
        }
    }

    /// A grid holding only the base config's values.
    pub fn single(base: &TrainConfig) -> Self {
        Self {
            lambdas: vec![base.lambda],
            epsilons: vec![base.epsilon],
            taus: vec![base.tau],
            batch_sizes: vec![base.batch_size],
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.epsilons.len() * self.taus.len() * self.batch_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product in λ, ε, τ, batch-size order (batch size varies
    /// fastest).
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &lambda in &self.lambdas {
            for &epsilon in &self.epsilons {
                for &tau in &self.taus {
                    for &batch_size in &self.batch_sizes {
                        out.push(TrainConfig {
                            lambda,
                            epsilon,
                            tau,
                            batch_size,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Position in enumeration order.
    pub index: usize,
    pub config: TrainConfig,
    pub best_epoch: Option<usize>,
    /// Validation scores at the best epoch.
    pub val: Prf,
}

/// Trains every cell from a clone of `initial` and ranks the cells by
/// validation F1, highest first; ties keep enumeration order. Up to
/// `parallel` cells run at once.
pub fn grid_search(
    base: &TrainConfig,
    grid: &Grid,
    initial: &ModelParams,
    model: &ModelConfig,
    train_set: &[TokenizedExample],
    val_set: &[TokenizedExample],
    parallel: usize,
) -> Result<Vec<GridCell>, TrainError> {
    if grid.is_empty() {
        return Err(TrainError::Config("grid has an empty axis".into()));
    }
    let cells = grid.cells(base);
    for c in &cells {
        c.validate()?;
    }
    let run = |(index, config): (usize, &TrainConfig)| -> Result<GridCell, TrainError> {
        let out = train(initial, model, config, train_set, val_set)?;
        log::info!("grid cell {index} done");
        Ok(GridCell {
            index,
            config: config.clone(),
            best_epoch: out.best_epoch,
            val: out.best().map(|r| r.val()).unwrap_or_default(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
    let mut results = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(run)
            .collect::<Result<Vec<_>, _>>()
    })?;
    results.sort_by(|a, b| b.val.f1.total_cmp(&a.val.f1).then(a.index.cmp(&b.index)));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_has_360_cells() {
        let g = Grid::full();
        assert_eq!(g.len(), 360);
        let cells = g.cells(&TrainConfig::default());
        assert_eq!(cells.len(), 360);
        assert_eq!(cells[0].lambda, 0.1);
        assert_eq!(cells[0].batch_size, 16);
        assert_eq!(cells[1].batch_size, 24);
        assert_eq!(cells[359].lambda, 0.5);
        assert_eq!(cells[359].tau, 0.1);
        let mut keys: Vec<String> = cells
            .iter()
            .map(|c| format!("{} {} {} {}", c.lambda, c.epsilon, c.tau, c.batch_size))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 360);
    }

    #[test]
    fn single_grid_is_the_base_config() {
        let base = TrainConfig::default();
        let cells = Grid::single(&base).cells(&base);
        assert_eq!(cells, vec![base]);
    }
}
