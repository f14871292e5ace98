//! Randomized grid search with k-fold cross-validation on the training split.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_task, ClassWeighting, Hyperparams, KernelKind, Predictions, SmoConfig, Targets, Task};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{balanced_accuracy, label_accuracy, mae_ordinal, srcc, ConfusionCounts};
use crate::evaluation::splits::kfold;

fn powers_of_two(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 2f64.powi(e)).collect()
}

/// Candidate values for each hyperparameter. `epsilon` is in target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub kernel: KernelKind,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub class_weighting: ClassWeighting,
}

impl GridSpace {
    /// `C` in 2^-3..2^10, `gamma` in 2^-10..2^3 and `epsilon` at 1%, 10% and 30%
    /// of the score range length.
    pub fn default_for(range_len: f64) -> Self {
        GridSpace {
            kernel: KernelKind::Rbf,
            c: powers_of_two(-3, 10),
            gamma: powers_of_two(-10, 3),
            epsilon: [0.01, 0.1, 0.3].iter().map(|f| f * range_len).collect(),
            class_weighting: ClassWeighting::Balanced,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelKind) -> Self {
        self.kernel = kernel;
        self
    }

    /// Every grid point that matters for `task`, in lexicographic `(C, gamma, epsilon)` order.
    pub fn candidates(&self, task: Task) -> Vec<Hyperparams> {
        let gammas: &[f64] = match self.kernel {
            KernelKind::Rbf => &self.gamma,
            KernelKind::Linear => &[0.0],
        };
        let epsilons: &[f64] = match task {
            Task::Regression => &self.epsilon,
            _ => &self.epsilon[..self.epsilon.len().min(1)],
        };
        let mut out = Vec::new();
        for &c in &self.c {
            for &gamma in gammas {
                for &epsilon in epsilons {
                    out.push(Hyperparams {
                        kernel: self.kernel,
                        c,
                        gamma,
                        epsilon,
                        class_weighting: self.class_weighting,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Hyperparams,
    /// Mean cross-validated score of `best`; higher is better.
    pub best_score: f64,
    /// Every sampled candidate with its score, `-inf` if training failed.
    pub evaluated: Vec<(Hyperparams, f64)>,
}

/// Selection criterion of a task: SRCC, balanced accuracy or negated MAE.
fn fold_score(task: Task, predicted: &Predictions, targets: &Targets<'_>, test: &[usize]) -> Result<f64> {
    match (predicted, targets) {
        (Predictions::Scores(p), Targets::Scores(s)) => {
            let truth: Vec<f64> = test.iter().map(|&i| s[i]).collect();
            Ok(srcc(p, &truth).unwrap_or(0.0))
        }
        (Predictions::Classes(p), Targets::Classes(c)) => {
            let truth: Vec<usize> = test.iter().map(|&i| c[i]).collect();
            if task == Task::Binary {
                let counts = ConfusionCounts::from_labels(&truth, p)?;
                balanced_accuracy(&counts).or_else(|_| label_accuracy(p, &truth))
            } else {
                Ok(-mae_ordinal(p, &truth)?)
            }
        }
        _ => Err(Error::Validation(format!("targets do not match task {task:?}"))),
    }
}

fn subset<'a>(targets: &Targets<'_>, idx: &[usize], scores: &'a mut Vec<f64>, classes: &'a mut Vec<usize>) -> Targets<'a> {
    match targets {
        Targets::Scores(s) => {
            *scores = idx.iter().map(|&i| s[i]).collect();
            Targets::Scores(scores)
        }
        Targets::Classes(c) => {
            *classes = idx.iter().map(|&i| c[i]).collect();
            Targets::Classes(classes)
        }
    }
}

fn cross_validate(
    task: Task,
    rows: &[Vec<f64>],
    targets: &Targets<'_>,
    folds: &[crate::evaluation::splits::Split],
    hp: &Hyperparams,
    seed: u64,
    smo: &SmoConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for fold in folds {
        let train_rows: Vec<Vec<f64>> = fold.train.iter().map(|&i| rows[i].clone()).collect();
        let test_rows: Vec<Vec<f64>> = fold.test.iter().map(|&i| rows[i].clone()).collect();
        let (mut s, mut c) = (Vec::new(), Vec::new());
        let train_targets = subset(targets, &fold.train, &mut s, &mut c);
        let model = train_task(task, &train_rows, &train_targets, hp, seed, smo)?;
        total += fold_score(task, &model.predict(&test_rows)?, targets, &fold.test)?;
    }
    Ok(total / folds.len() as f64)
}

/// Samples `n_candidates` grid points without replacement and keeps the one with
/// the best mean k-fold score. Ties go to the smaller `C`, then `gamma`, then
/// `epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn random_grid_search(
    task: Task,
    rows: &[Vec<f64>],
    targets: &Targets<'_>,
    space: &GridSpace,
    n_candidates: usize,
    k_folds: usize,
    seed: u64,
    smo: &SmoConfig,
) -> Result<SearchOutcome> {
    if n_candidates == 0 {
        return Err(Error::Validation("grid search needs at least one candidate".into()));
    }
    let grid = space.candidates(task);
    if grid.is_empty() {
        return Err(Error::Validation("empty hyperparameter grid".into()));
    }
    let n_targets = match targets {
        Targets::Scores(s) => s.len(),
        Targets::Classes(c) => c.len(),
    };
    if n_targets != rows.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: n_targets,
        });
    }
    let strata = match targets {
        Targets::Classes(c) => Some(*c),
        Targets::Scores(_) => None,
    };
    let folds = kfold(rows.len(), strata, k_folds, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, grid.len(), n_candidates.min(grid.len()));
    let sampled: Vec<Hyperparams> = picked.iter().map(|i| grid[i]).collect();

    let evaluated: Vec<(Hyperparams, f64)> = sampled
        .par_iter()
        .map(|hp| {
            let score = cross_validate(task, rows, targets, &folds, hp, seed, smo).unwrap_or_else(|e| {
                log::debug!("candidate {hp:?} failed: {e}");
                f64::NEG_INFINITY
            });
            (*hp, score)
        })
        .collect();

    let key = |hp: &Hyperparams| (hp.c, hp.gamma, hp.epsilon);
    let (best, best_score) = evaluated
        .iter()
        .copied()
        .reduce(|a, b| {
            let better = b.1 > a.1 || (b.1 == a.1 && key(&b.0).partial_cmp(&key(&a.0)) == Some(std::cmp::Ordering::Less));
            if better {
                b
            } else {
                a
            }
        })
        .expect("at least one candidate");
    if best_score == f64::NEG_INFINITY {
        return Err(Error::Degenerate("every grid-search candidate failed to train".into()));
    }
    Ok(SearchOutcome {
        best,
        best_score,
        evaluated,
    })
}
