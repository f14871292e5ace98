//! Seeded train/test splits and k-fold partitions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One train/test partition of sample indices. Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub ratio: f64,
    pub seed: u64,
    pub stratified: bool,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// Generator for repeat `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn group_by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

fn test_count(n: usize, ratio: f64) -> usize {
    (((1.0 - ratio) * n as f64).round() as usize).clamp(1, n - 1)
}

/// Draws `repeats` random splits of `n` samples with `ratio` of them in train.
///
/// With `labels`, every class is split separately so each one keeps about the
/// same share on both sides; each class then needs at least two members.
pub fn make_splits(n: usize, labels: Option<&[usize]>, ratio: f64, repeats: usize, seed: u64) -> Result<SplitPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Validation(format!("train ratio {ratio} outside (0, 1)")));
    }
    if repeats == 0 {
        return Err(Error::Validation("at least one repeat is required".into()));
    }
    if n < 10 {
        return Err(Error::TooFewSamples {
            required: 10,
            actual: n,
        });
    }
    let groups = match labels {
        Some(l) => {
            if l.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: l.len(),
                });
            }
            let groups = group_by_class(l);
            if let Some((&class, members)) = groups.iter().find(|(_, m)| m.len() < 2) {
                return Err(Error::SmallClass {
                    class,
                    count: members.len(),
                    required: 2,
                });
            }
            groups.into_values().collect()
        }
        None => vec![(0..n).collect::<Vec<_>>()],
    };

    let splits = (0..repeats)
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut split = Split {
                train: Vec::with_capacity(n),
                test: Vec::with_capacity(n),
            };
            for members in &groups {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                let k = test_count(shuffled.len(), ratio);
                split.test.extend_from_slice(&shuffled[..k]);
                split.train.extend_from_slice(&shuffled[k..]);
            }
            split.train.sort_unstable();
            split.test.sort_unstable();
            split
        })
        .collect();
    Ok(SplitPlan {
        ratio,
        seed,
        stratified: labels.is_some(),
        splits,
    })
}

/// Partitions `0..n` into `k` folds, returned as train/test pairs.
///
/// With `labels` the members of each class are dealt round-robin so every fold
/// sees every class when the class is large enough.
pub fn kfold(n: usize, labels: Option<&[usize]>, k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::TooFewSamples {
            required: k,
            actual: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match labels {
        Some(l) => {
            if l.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: l.len(),
                });
            }
            group_by_class(l)
                .into_values()
                .flat_map(|mut m| {
                    m.shuffle(&mut rng);
                    m
                })
                .collect()
        }
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all
        }
    };
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
            Split { train, test }
        })
        .collect())
}
