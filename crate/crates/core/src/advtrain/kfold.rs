use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainError};
use crate::encoder::{ModelConfig, ModelParams};
use crate::metrics::{mean_prf, Prf};
use crate::textprep::TokenizedExample;

/// Index sets of a k-fold partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    pub folds: Vec<Vec<usize>>,
    /// Labels with fewer members than folds.
    pub sparse_labels: Vec<usize>,
}

/// Stratified k-fold partition of `labels`.
///
/// Each label's indices are shuffled with `seed`, the label groups are laid
/// end to end in label order, and the sequence is dealt to folds round
/// robin. Fold sizes therefore differ by at most one and every label is
/// spread as evenly as its count allows.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Folds, TrainError> {
    if k < 2 {
        return Err(TrainError::Config(format!("k = {k}; need at least 2 folds")));
    }
    if labels.len() < k {
        return Err(TrainError::Config(format!(
            "{} examples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        groups.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sparse_labels = Vec::new();
    let mut folds = vec![Vec::new(); k];
    let mut dealt = 0;
    for (label, mut members) in groups {
        if members.len() < k {
            log::warn!(
                "label {label} has {} examples, fewer than {k} folds",
                members.len()
            );
            sparse_labels.push(label);
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[dealt % k].push(i);
            dealt += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(Folds { folds, sparse_labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    /// 0-based.
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub best_epoch: Option<usize>,
    pub val: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean: Prf,
}

pub fn summarize_folds(folds: Vec<FoldResult>) -> CvReport {
    let scores: Vec<Prf> = folds.iter().map(|f| f.val).collect();
    CvReport {
        mean: mean_prf(&scores),
        folds,
    }
}

/// Stratified k-fold cross-validation. Every fold trains from a clone of
/// `initial`; reported scores are those of each fold's best epoch.
pub fn kfold_cv(
    initial: &ModelParams,
    model: &ModelConfig,
    config: &TrainConfig,
    dataset: &[TokenizedExample],
    k: usize,
    parallel: usize,
) -> Result<CvReport, TrainError> {
    let labels: Vec<usize> = dataset.iter().map(|ex| ex.label).collect();
    let folds = stratified_folds(&labels, k, config.seed)?;
    let run = |fold: usize| -> Result<FoldResult, TrainError> {
        let mut in_val = vec![false; dataset.len()];
        for &i in &folds.folds[fold] {
            in_val[i] = true;
        }
        let (val, tr): (Vec<_>, Vec<_>) = dataset.iter().zip(&in_val).partition(|(_, &is_val)| is_val);
        let val: Vec<TokenizedExample> = val.into_iter().map(|(ex, _)| ex.clone()).collect();
        let tr: Vec<TokenizedExample> = tr.into_iter().map(|(ex, _)| ex.clone()).collect();
        let out = train(initial, model, config, &tr, &val)?;
        log::info!("fold {fold} done");
        Ok(FoldResult {
            fold,
            train_size: tr.len(),
            val_size: val.len(),
            best_epoch: out.best_epoch,
            val: out.best().map(|r| r.val()).unwrap_or_default(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
    let results = pool.install(|| (0..k).into_par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    Ok(summarize_folds(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_sized_folds() {
        // 4,500 positive / 11,242 other: the 15,742 total
        let labels: Vec<usize> = (0..15_742).map(|i| usize::from(i < 4_500)).collect();
        let f = stratified_folds(&labels, 10, 0).unwrap();
        let mut sizes: Vec<usize> = f.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        sizes.dedup();
        assert_eq!(sizes, vec![1_574, 1_575]);
        for fold in &f.folds {
            let pos = fold.iter().filter(|&&i| labels[i] == 1).count();
            assert!((450..=450).contains(&pos), "{pos}");
        }
    }

    #[test]
    fn sparse_labels_are_reported() {
        let labels = [0, 0, 0, 0, 1, 1];
        let f = stratified_folds(&labels, 2, 1).unwrap();
        assert!(f.sparse_labels.is_empty());
        let f = stratified_folds(&[0, 0, 0, 0, 0, 1], 3, 1).unwrap();
        assert_eq!(f.sparse_labels, vec![1]);
        assert!(stratified_folds(&[0, 1], 3, 0).is_err());
        assert!(stratified_folds(&[0, 1, 1], 1, 0).is_err());
    }

    #[test]
    fn identical_folds_average_to_any_fold() {
        let val = Prf {
            precision: 0.5,
            recall: 0.25,
            f1: 1.0 / 3.0,
        };
        let folds = (0..4)
            .map(|fold| FoldResult {
                fold,
                train_size: 3,
                val_size: 1,
                best_epoch: Some(1),
                val,
            })
            .collect();
        assert_eq!(summarize_folds(folds).mean, val);
    }

    proptest! {
        #[test]
        fn folds_partition_the_data(labels in prop::collection::vec(0usize..3, 10..80), k in 2usize..8, seed in 0u64..50) {
            let f = stratified_folds(&labels, k, seed).unwrap();
            let mut all: Vec<usize> = f.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let max = f.folds.iter().map(Vec::len).max().unwrap();
            let min = f.folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }
    }
}
