use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Disease, Example, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    /// Stratify by (label, disease) rather than label alone.
    pub by_disease: bool,
}

impl Default for SplitSpec {
    /// 65 / 15 / 20, stratified by label and disease.
    fn default() -> Self {
        Self {
            train: 0.65,
            val: 0.15,
            test: 0.20,
            seed: 0,
            by_disease: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(DataError::Split(format!("fractions must be positive: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Split(format!("fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// `floor(f·n)`, robust to `0.65 * 100 = 65.00000000000001`-style noise in
/// either direction.
fn floor_share(f: f64, n: usize) -> usize {
    (f * n as f64 + 1e-9).floor() as usize
}

/// Hands `extra` more slots to strata in order of largest remainder, at
/// most one each and never beyond a stratum's free capacity.
fn top_up(quota: &mut [usize], remainders: &[f64], free: &[usize], extra: usize) {
    let mut order: Vec<usize> = (0..quota.len()).filter(|&i| free[i] > 0).collect();
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in order.iter().take(extra) {
        quota[i] += 1;
    }
}

/// Shuffled per-stratum split.
///
/// Each stratum first gets `floor(f·size)` train and val examples. Leftover
/// slots are then handed out one per stratum, largest remainder first, until
/// the totals reach `floor(f_train·n)` and `floor(f_val·n)`. The test set
/// takes everything else. Every stratum is thus within one example of its
/// exact share, and the overall sizes match the unstratified rounding.
pub fn stratified_split(examples: &[Example], spec: &SplitSpec) -> Result<Split<Example>, DataError> {
    spec.validate()?;
    if examples.is_empty() {
        return Err(DataError::Empty);
    }
    let mut strata: BTreeMap<(Label, Option<Disease>), Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        let key = (ex.label, spec.by_disease.then_some(ex.disease));
        strata.entry(key).or_default().push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let n = examples.len();

    let mut train_q: Vec<usize> = sizes.iter().map(|&s| floor_share(spec.train, s)).collect();
    let mut val_q: Vec<usize> = sizes.iter().map(|&s| floor_share(spec.val, s)).collect();
    let rem = |f: f64, q: &[usize]| -> Vec<f64> {
        sizes
            .iter()
            .zip(q)
            .map(|(&s, &q)| f * s as f64 - q as f64)
            .collect()
    };

    let free: Vec<usize> = (0..sizes.len())
        .map(|i| sizes[i] - train_q[i] - val_q[i])
        .collect();
    let need = floor_share(spec.train, n).saturating_sub(train_q.iter().sum());
    let r = rem(spec.train, &train_q);
    top_up(&mut train_q, &r, &free, need);

    let free: Vec<usize> = (0..sizes.len())
        .map(|i| sizes[i] - train_q[i] - val_q[i])
        .collect();
    let need = floor_share(spec.val, n).saturating_sub(val_q.iter().sum());
    let r = rem(spec.val, &val_q);
    top_up(&mut val_q, &r, &free, need);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (k, mut members) in strata.into_values().enumerate() {
        members.shuffle(&mut rng);
        let (tr, rest) = members.split_at(train_q[k]);
        let (va, te) = rest.split_at(val_q[k]);
        out.train.extend(tr.iter().map(|&i| examples[i].clone()));
        out.val.extend(va.iter().map(|&i| examples[i].clone()));
        out.test.extend(te.iter().map(|&i| examples[i].clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::expand_counts;
    use crate::dataio::DatasetStats;
    use proptest::prelude::*;

    fn single_stratum(n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| Example {
                raw_text: format!("t{i}"),
                label: Label::HealthMention,
                disease: Disease::Fever,
            })
            .collect()
    }

    #[test]
    fn hundred_single_stratum() {
        let s = stratified_split(&single_stratum(100), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (65, 15, 20));
    }

    #[test]
    fn table_counts_split_sizes() {
        let examples = expand_counts(&DatasetStats::table1());
        assert_eq!(examples.len(), 15_742);
        for by_disease in [true, false] {
            let spec = SplitSpec {
                by_disease,
                ..SplitSpec::default()
            };
            let s = stratified_split(&examples, &spec).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10_232, 2_361, 3_149));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            stratified_split(&[], &SplitSpec::default()),
            Err(DataError::Empty)
        ));
        let bad = SplitSpec {
            train: 0.7,
            ..SplitSpec::default()
        };
        assert!(stratified_split(&single_stratum(3), &bad).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let ex = expand_counts(&DatasetStats::table1());
        let a = stratified_split(&ex[..500], &SplitSpec::default()).unwrap();
        let b = stratified_split(&ex[..500], &SplitSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    fn corpus() -> impl Strategy<Value = Vec<Example>> {
        prop::collection::vec((0usize..3, 0usize..4), 1..200).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (l, d))| Example {
                    raw_text: format!("t{i}"),
                    label: Label::ALL[l],
                    disease: Disease::TEN[d],
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_is_a_partition(ex in corpus(), seed in 0u64..20) {
            let spec = SplitSpec { seed, ..SplitSpec::default() };
            let s = stratified_split(&ex, &spec).unwrap();
            let mut seen: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test)
                .map(|e| e.raw_text.clone()).collect();
            seen.sort();
            let mut all: Vec<String> = ex.iter().map(|e| e.raw_text.clone()).collect();
            all.sort();
            prop_assert_eq!(seen, all);
            prop_assert_eq!(s.train.len(), floor_share(0.65, ex.len()));
            prop_assert_eq!(s.val.len(), floor_share(0.15, ex.len()));
        }

        #[test]
        fn strata_stay_within_one_of_their_share(ex in corpus()) {
            let s = stratified_split(&ex, &SplitSpec::default()).unwrap();
            let key = |e: &Example| (e.label, e.disease);
            let mut counts: BTreeMap<(Label, Disease), [usize; 4]> = BTreeMap::new();
            for e in &ex { counts.entry(key(e)).or_default()[0] += 1; }
            for e in &s.train { counts.get_mut(&key(e)).unwrap()[1] += 1; }
            for e in &s.val { counts.get_mut(&key(e)).unwrap()[2] += 1; }
            for e in &s.test { counts.get_mut(&key(e)).unwrap()[3] += 1; }
            for c in counts.values() {
                let n = c[0] as f64;
                prop_assert!((c[1] as f64 - 0.65 * n).abs() < 1.0 + 1e-9);
                prop_assert!((c[2] as f64 - 0.15 * n).abs() < 1.0 + 1e-9);
                prop_assert!((c[3] as f64 - 0.20 * n).abs() < 2.0 + 1e-9);
            }
        }
    }
}
