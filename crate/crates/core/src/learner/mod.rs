//! Support vector learners for the three tasks.
//!
//! Regression uses epsilon-SVR. Binary classification uses a soft-margin SVC with
//! optional balanced class weights. Ordinal classification with `N` ordered classes
//! trains `N - 1` binary SVCs, the k-th separating `class > k` from the rest, and
//! predicts the number of positive subproblem decisions. That count is monotone in
//! the subproblem outputs by construction.
//!
//! Every trainer fits its own [`Standardizer`] on the rows it is given, and every
//! [`TrainedModel`] applies it before evaluating decision functions, so test rows never
//! influence preprocessing.

mod search;
mod smo;
mod standardize;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelingScheme;

pub use search::{random_grid_search, GridSpace, SearchOutcome};
pub use smo::SmoConfig;
pub use standardize::Standardizer;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelKind::Rbf),
            "linear" => Ok(KernelKind::Linear),
            other => Err(Error::parse("kernel", format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    None,
    /// Per-class `C` scaled by `n / (2 n_class)`.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kernel: KernelKind,
    pub c: f64,
    /// RBF width; ignored by the linear kernel.
    pub gamma: f64,
    /// Half-width of the insensitive tube, in target units (regression only).
    pub epsilon: f64,
    pub class_weighting: ClassWeighting,
}

impl Hyperparams {
    pub fn rbf(c: f64, gamma: f64) -> Self {
        Hyperparams {
            kernel: KernelKind::Rbf,
            c,
            gamma,
            epsilon: 0.1,
            class_weighting: ClassWeighting::Balanced,
        }
    }

    pub fn linear(c: f64) -> Self {
        Hyperparams {
            kernel: KernelKind::Linear,
            gamma: 0.0,
            ..Self::rbf(c, 0.0)
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_class_weighting(mut self, w: ClassWeighting) -> Self {
        self.class_weighting = w;
        self
    }

    pub fn kernel(&self) -> Kernel {
        match self.kernel {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Rbf => Kernel::Rbf { gamma: self.gamma },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = !(self.c > 0.0 && self.c.is_finite())
            || (self.kernel == KernelKind::Rbf && !(self.gamma > 0.0 && self.gamma.is_finite()))
            || !(self.epsilon >= 0.0 && self.epsilon.is_finite());
        if bad {
            return Err(Error::Validation(format!("invalid hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Task {
    Regression,
    Binary,
    Ordinal { n_classes: usize },
}

/// `f(x) = sum_k coef_k K(sv_k, x) + bias` over standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFunction {
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    /// Maximal KKT violation at the solution.
    pub kkt_gap: f64,
    /// Largest excursion of a dual variable outside `[0, C_t]` (zero when feasible).
    pub box_violation: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective (minimization form) after each SMO update, when tracked.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl DecisionFunction {
    pub fn eval(&self, kernel: Kernel, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub task: Task,
    pub hyperparams: Hyperparams,
    pub standardizer: Standardizer,
    pub subproblems: Vec<DecisionFunction>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Scores(Vec<f64>),
    Classes(Vec<usize>),
}

impl Predictions {
    pub fn scores(&self) -> Option<&[f64]> {
        match self {
            Predictions::Scores(s) => Some(s),
            Predictions::Classes(_) => None,
        }
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Predictions::Classes(c) => Some(c),
            Predictions::Scores(_) => None,
        }
    }
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn check_dim(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(())
    }

    /// Raw decision values of every subproblem for one row.
    pub fn decision_values(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(row)?;
        let z = self.standardizer.transform_row(row);
        let kernel = self.hyperparams.kernel();
        Ok(self.subproblems.iter().map(|f| f.eval(kernel, &z)).collect())
    }

    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        let values = self.decision_values(row)?;
        Ok(match self.task {
            Task::Regression => values[0],
            // a decision value of exactly zero goes to the lower class
            Task::Binary | Task::Ordinal { .. } => values.iter().filter(|&&v| v > 0.0).count() as f64,
        })
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Predictions> {
        let raw = rows
            .par_iter()
            .map(|r| self.predict_row(r))
            .collect::<Result<Vec<f64>>>()?;
        Ok(match self.task {
            Task::Regression => Predictions::Scores(raw),
            Task::Binary | Task::Ordinal { .. } => {
                Predictions::Classes(raw.into_iter().map(|v| v as usize).collect())
            }
        })
    }

    /// Largest KKT violation over all subproblems.
    pub fn max_kkt_gap(&self) -> f64 {
        self.subproblems.iter().map(|f| f.kkt_gap).fold(0.0, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::parse(path.display().to_string(), e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::parse(
                path.display().to_string(),
                format!("unsupported model format version {}", model.format_version),
            ));
        }
        Ok(model)
    }
}

fn check_rows(rows: &[Vec<f64>], n_targets: usize) -> Result<()> {
    if rows.len() != n_targets {
        return Err(Error::Validation(format!(
            "{} feature rows for {} targets",
            rows.len(),
            n_targets
        )));
    }
    Ok(())
}

fn finish(function: smo::SmoSolution, x: &[Vec<f64>], base: &[usize], y: &[f64], upper: &[f64], n_base: usize) -> DecisionFunction {
    let mut coef = vec![0.0; n_base];
    let mut box_violation = 0.0f64;
    for t in 0..function.alpha.len() {
        let a = function.alpha[t];
        box_violation = box_violation.max(-a).max(a - upper[t]);
        coef[base[t]] += y[t] * a;
    }
    let (support_vectors, coefficients): (Vec<_>, Vec<_>) = coef
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c != 0.0)
        .map(|(i, c)| (x[i].clone(), c))
        .unzip();
    DecisionFunction {
        support_vectors,
        coefficients,
        bias: -function.rho,
        kkt_gap: function.kkt_gap,
        box_violation,
        dual_objective: function.objective,
        iterations: function.iterations,
        converged: function.converged,
        objective_trace: function.objective_trace,
    }
}

/// Binary SVC on already standardized rows. `positive[i]` marks the +1 class.
fn solve_binary(x: &[Vec<f64>], positive: &[bool], hp: &Hyperparams, smo: &SmoConfig) -> Result<DecisionFunction> {
    let n = x.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::MissingClass(1));
    }
    if n_pos == n {
        return Err(Error::MissingClass(0));
    }
    let (c_pos, c_neg) = match hp.class_weighting {
        ClassWeighting::None => (hp.c, hp.c),
        ClassWeighting::Balanced => (
            hp.c * n as f64 / (2.0 * n_pos as f64),
            hp.c * n as f64 / (2.0 * (n - n_pos) as f64),
        ),
    };
    let y: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = positive.iter().map(|&p| if p { c_pos } else { c_neg }).collect();
    let base: Vec<usize> = (0..n).collect();
    let problem = smo::DualProblem {
        x,
        base: base.clone(),
        y: y.clone(),
        p: vec![-1.0; n],
        upper: upper.clone(),
    };
    let sol = smo::solve(&problem, hp.kernel(), smo);
    Ok(finish(sol, x, &base, &y, &upper, n))
}

/// Soft-margin SVC for labels in {0, 1}; class 1 is the positive side.
pub fn train_svc(rows: &[Vec<f64>], labels: &[usize], hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    train_svc_with(rows, labels, hp, seed, &SmoConfig::default())
}

pub fn train_svc_with(
    rows: &[Vec<f64>],
    labels: &[usize],
    hp: &Hyperparams,
    seed: u64,
    smo: &SmoConfig,
) -> Result<TrainedModel> {
    train_ordinal_with(rows, labels, 2, hp, seed, smo).map(|mut m| {
        m.task = Task::Binary;
        m
    })
}

/// Epsilon-insensitive support vector regression.
pub fn train_svr(rows: &[Vec<f64>], targets: &[f64], hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    train_svr_with(rows, targets, hp, seed, &SmoConfig::default())
}

pub fn train_svr_with(
    rows: &[Vec<f64>],
    targets: &[f64],
    hp: &Hyperparams,
    seed: u64,
    smo: &SmoConfig,
) -> Result<TrainedModel> {
    hp.validate()?;
    check_rows(rows, targets.len())?;
    if rows.len() < 10 {
        return Err(Error::TooFewSamples {
            required: 10,
            actual: rows.len(),
        });
    }
    let standardizer = Standardizer::fit(rows)?;
    let x = standardizer.transform(rows);
    let n = x.len();
    let base: Vec<usize> = (0..n).chain(0..n).collect();
    let y: Vec<f64> = std::iter::repeat_n(1.0, n).chain(std::iter::repeat_n(-1.0, n)).collect();
    let p: Vec<f64> = targets
        .iter()
        .map(|z| hp.epsilon - z)
        .chain(targets.iter().map(|z| hp.epsilon + z))
        .collect();
    let upper = vec![hp.c; 2 * n];
    let problem = smo::DualProblem {
        x: &x,
        base: base.clone(),
        y: y.clone(),
        p,
        upper: upper.clone(),
    };
    let sol = smo::solve(&problem, hp.kernel(), smo);
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        task: Task::Regression,
        hyperparams: *hp,
        standardizer,
        subproblems: vec![finish(sol, &x, &base, &y, &upper, n)],
        n_samples: n,
        seed,
    })
}

/// Cumulative binary decomposition over `n_classes` ordered classes.
pub fn train_ordinal(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainedModel> {
    train_ordinal_with(rows, labels, n_classes, hp, seed, &SmoConfig::default())
}

pub fn train_ordinal_with(
    rows: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
    seed: u64,
    smo: &SmoConfig,
) -> Result<TrainedModel> {
    hp.validate()?;
    check_rows(rows, labels.len())?;
    if n_classes < 2 {
        return Err(Error::Validation("ordinal task needs at least two classes".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Validation(format!("label {bad} outside 0..{n_classes}")));
    }
    let mut counts = vec![0usize; n_classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    let standardizer = Standardizer::fit(rows)?;
    let x = standardizer.transform(rows);
    let subproblems = (0..n_classes - 1)
        .into_par_iter()
        .map(|k| {
            let positive: Vec<bool> = labels.iter().map(|&l| l > k).collect();
            solve_binary(&x, &positive, hp, smo)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        task: Task::Ordinal { n_classes },
        hyperparams: *hp,
        standardizer,
        subproblems,
        n_samples: rows.len(),
        seed,
    })
}

/// Trains the task's model on `rows` with targets given either as scores or class labels.
pub fn train_task(task: Task, rows: &[Vec<f64>], targets: &Targets<'_>, hp: &Hyperparams, seed: u64, smo: &SmoConfig) -> Result<TrainedModel> {
    match (task, targets) {
        (Task::Regression, Targets::Scores(s)) => train_svr_with(rows, s, hp, seed, smo),
        (Task::Binary, Targets::Classes(c)) => train_svc_with(rows, c, hp, seed, smo),
        (Task::Ordinal { n_classes }, Targets::Classes(c)) => train_ordinal_with(rows, c, n_classes, hp, seed, smo),
        _ => Err(Error::Validation(format!("targets do not match task {task:?}"))),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Scores(&'a [f64]),
    Classes(&'a [usize]),
}

/// Predicts scores with a regression model and buckets them with `scheme`.
pub fn regress_then_threshold(model: &TrainedModel, scheme: &LabelingScheme, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
    if model.task != Task::Regression {
        return Err(Error::Validation(format!(
            "regress-then-threshold needs a regression model, got {:?}",
            model.task
        )));
    }
    let Predictions::Scores(scores) = model.predict(rows)? else {
        unreachable!("regression models predict scores")
    };
    Ok(scheme.discretize_scores(&scores))
}
