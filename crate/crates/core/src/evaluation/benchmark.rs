//! Repeated train/test benchmarking and report assembly.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    balanced_accuracy, label_accuracy, mae_ordinal, mze, plcc, plcc_logistic, srcc, ConfusionCounts,
};
use super::splits::{make_splits, Split, SplitPlan};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::labeling::LabelingScheme;
use crate::learner::{
    random_grid_search, regress_then_threshold, train_task, ClassWeighting, GridSpace, Hyperparams, KernelKind,
    Predictions, SmoConfig, Targets, Task,
};

/// Benchmark task as named in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchTask {
    /// Task A.
    Regression,
    /// Task B.
    Binary,
    /// Task B answered by thresholding an SVR.
    BinaryViaRegression,
    /// Task C.
    Ordinal,
}

impl BenchTask {
    pub fn name(self) -> &'static str {
        match self {
            BenchTask::Regression => "regression",
            BenchTask::Binary => "binary",
            BenchTask::BinaryViaRegression => "binary-via-regression",
            BenchTask::Ordinal => "ordinal",
        }
    }

    pub fn metrics(self) -> [Metric; 2] {
        match self {
            BenchTask::Regression => [Metric::Srcc, Metric::Plcc],
            BenchTask::Binary | BenchTask::BinaryViaRegression => [Metric::Accuracy, Metric::BalancedAccuracy],
            BenchTask::Ordinal => [Metric::Mze, Metric::Mae],
        }
    }
}

impl fmt::Display for BenchTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "regression" => Ok(BenchTask::Regression),
            "b" | "binary" => Ok(BenchTask::Binary),
            "binary-via-regression" | "rt" => Ok(BenchTask::BinaryViaRegression),
            "c" | "ordinal" => Ok(BenchTask::Ordinal),
            other => Err(Error::Validation(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Srcc,
    Plcc,
    Accuracy,
    BalancedAccuracy,
    Mze,
    Mae,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Srcc => "srcc",
            Metric::Plcc => "plcc",
            Metric::Accuracy => "accuracy",
            Metric::BalancedAccuracy => "balanced-accuracy",
            Metric::Mze => "mze",
            Metric::Mae => "mae",
        }
    }

    fn header(self) -> &'static str {
        match self {
            Metric::Srcc => "SRCC",
            Metric::Plcc => "PLCC",
            Metric::Accuracy => "Acc.",
            Metric::BalancedAccuracy => "B.Acc.",
            Metric::Mze => "MZE",
            Metric::Mae => "MAE",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::Srcc,
            Metric::Plcc,
            Metric::Accuracy,
            Metric::BalancedAccuracy,
            Metric::Mze,
            Metric::Mae,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::Validation(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub tasks: Vec<BenchTask>,
    pub repeats: usize,
    pub train_ratio: f64,
    pub seed: u64,
    pub n_candidates: usize,
    pub k_folds: usize,
    pub kernel: KernelKind,
    pub class_weighting: ClassWeighting,
    /// Fit a 4-parameter logistic on the test predictions before PLCC.
    pub plcc_logistic: bool,
    /// Overrides the default grid derived from the score range.
    pub grid: Option<GridSpace>,
    pub smo: SmoConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            tasks: vec![BenchTask::Regression, BenchTask::Binary, BenchTask::Ordinal],
            repeats: 20,
            train_ratio: 0.8,
            seed: 0,
            n_candidates: 32,
            k_folds: 5,
            kernel: KernelKind::Rbf,
            class_weighting: ClassWeighting::Balanced,
            plcc_logistic: false,
            grid: None,
            smo: SmoConfig::default(),
        }
    }
}

/// Class labelings used by the classification tasks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Labelings<'a> {
    pub binary: Option<&'a LabelingScheme>,
    pub ordinal: Option<&'a LabelingScheme>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub task: BenchTask,
    pub metric: Metric,
    pub values: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; 0 for a single repeat.
    pub std: f64,
}

impl MetricSummary {
    pub fn new(task: BenchTask, metric: Metric, values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MetricSummary {
            task,
            metric,
            values,
            mean,
            median,
            std,
        }
    }
}

/// Hyperparameters chosen by grid search for one (task, repeat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub task: BenchTask,
    pub repeat: usize,
    pub hyperparams: Hyperparams,
    pub cv_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub model: String,
    pub n_samples: usize,
    pub config: BenchmarkConfig,
    pub metrics: Vec<MetricSummary>,
    pub selections: Vec<Selection>,
}

impl BenchmarkReport {
    pub fn get(&self, task: BenchTask, metric: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.task == task && m.metric == metric)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path.display().to_string(), e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

struct TaskResult {
    task: BenchTask,
    repeat: usize,
    values: [f64; 2],
    selection: Option<(Hyperparams, f64)>,
}

struct Runner<'a> {
    rows: Vec<Vec<f64>>,
    scores: Vec<f64>,
    binary: Option<(&'a LabelingScheme, Vec<usize>)>,
    ordinal: Option<(usize, Vec<usize>)>,
    grid: GridSpace,
    config: &'a BenchmarkConfig,
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

impl Runner<'_> {
    fn fit_predict(&self, task: Task, targets: &Targets<'_>, split: &Split, seed: u64) -> Result<(Predictions, Hyperparams, f64)> {
        let train_rows = pick(&self.rows, &split.train);
        let (train_scores, train_classes);
        let train_targets = match targets {
            Targets::Scores(s) => {
                train_scores = pick(s, &split.train);
                Targets::Scores(&train_scores)
            }
            Targets::Classes(c) => {
                train_classes = pick(c, &split.train);
                Targets::Classes(&train_classes)
            }
        };
        let c = self.config;
        let search = random_grid_search(task, &train_rows, &train_targets, &self.grid, c.n_candidates, c.k_folds, seed, &c.smo)?;
        let model = train_task(task, &train_rows, &train_targets, &search.best, seed, &c.smo)?;
        let predicted = model.predict(&pick(&self.rows, &split.test))?;
        Ok((predicted, search.best, search.best_score))
    }

    fn run(&self, task: BenchTask, repeat: usize, split: &Split) -> Result<TaskResult> {
        let seed = self.config.seed.wrapping_add(repeat as u64);
        let missing = |what: &str| Error::Validation(format!("task {task} needs a {what} labeling"));
        let (values, selection) = match task {
            BenchTask::Regression => {
                let (p, hp, score) = self.fit_predict(Task::Regression, &Targets::Scores(&self.scores), split, seed)?;
                let predicted = p.scores().expect("regression predicts scores");
                let truth = pick(&self.scores, &split.test);
                let corr = if self.config.plcc_logistic {
                    plcc_logistic(predicted, &truth)?
                } else {
                    plcc(predicted, &truth)?
                };
                ([srcc(predicted, &truth)?, corr], Some((hp, score)))
            }
            BenchTask::Binary => {
                let (_, labels) = self.binary.as_ref().ok_or_else(|| missing("binary"))?;
                let (p, hp, score) = self.fit_predict(Task::Binary, &Targets::Classes(labels), split, seed)?;
                (binary_metrics(p.classes().expect("classes"), &pick(labels, &split.test))?, Some((hp, score)))
            }
            BenchTask::BinaryViaRegression => {
                let (scheme, labels) = self.binary.as_ref().ok_or_else(|| missing("binary"))?;
                let train_rows = pick(&self.rows, &split.train);
                let train_scores = pick(&self.scores, &split.train);
                let c = self.config;
                let targets = Targets::Scores(&train_scores);
                let search =
                    random_grid_search(Task::Regression, &train_rows, &targets, &self.grid, c.n_candidates, c.k_folds, seed, &c.smo)?;
                let model = train_task(Task::Regression, &train_rows, &targets, &search.best, seed, &c.smo)?;
                let predicted = regress_then_threshold(&model, scheme, &pick(&self.rows, &split.test))?;
                (
                    binary_metrics(&predicted, &pick(labels, &split.test))?,
                    Some((search.best, search.best_score)),
                )
            }
            BenchTask::Ordinal => {
                let (n_classes, labels) = self.ordinal.as_ref().ok_or_else(|| missing("ordinal"))?;
                let task = Task::Ordinal { n_classes: *n_classes };
                let (p, hp, score) = self.fit_predict(task, &Targets::Classes(labels), split, seed)?;
                let (predicted, truth) = (p.classes().expect("classes"), pick(labels, &split.test));
                ([mze(predicted, &truth)?, mae_ordinal(predicted, &truth)?], Some((hp, score)))
            }
        };
        Ok(TaskResult {
            task,
            repeat,
            values,
            selection,
        })
    }
}

fn binary_metrics(predicted: &[usize], truth: &[usize]) -> Result<[f64; 2]> {
    let counts = ConfusionCounts::from_labels(truth, predicted)?;
    Ok([label_accuracy(predicted, truth)?, balanced_accuracy(&counts)?])
}

/// Runs every configured task over `config.repeats` random splits.
///
/// Regression uses plain random splits and the classification tasks stratify on
/// their labels; all plans share the seed so repeat `r` is drawn from the same
/// random stream for every task. Binary-via-regression reuses the binary plan.
pub fn run_benchmark(
    d: &Dataset,
    fm: &FeatureMatrix,
    model_name: &str,
    labelings: Labelings<'_>,
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    fm.check_alignment(d)?;
    if config.tasks.is_empty() {
        return Err(Error::Validation("no benchmark tasks selected".into()));
    }
    let range = d.score_range();
    let grid = config
        .grid
        .clone()
        .unwrap_or_else(|| GridSpace::default_for(range.len()))
        .with_kernel(config.kernel);
    let grid = GridSpace {
        class_weighting: config.class_weighting,
        ..grid
    };
    let scores = d.scores();
    let needs = |t: BenchTask| config.tasks.contains(&t);
    let binary = match labelings.binary {
        Some(s) if needs(BenchTask::Binary) || needs(BenchTask::BinaryViaRegression) => {
            check_scheme(s, 2)?;
            Some((s, s.discretize_scores(&scores)))
        }
        _ => None,
    };
    let ordinal = match labelings.ordinal {
        Some(s) if needs(BenchTask::Ordinal) => Some((s.n_classes, s.discretize_scores(&scores))),
        _ => None,
    };

    let n = d.len();
    let plan_for = |task: BenchTask| -> Result<SplitPlan> {
        let labels = match task {
            BenchTask::Regression => None,
            BenchTask::Binary | BenchTask::BinaryViaRegression => binary.as_ref().map(|(_, l)| l.as_slice()),
            BenchTask::Ordinal => ordinal.as_ref().map(|(_, l)| l.as_slice()),
        };
        make_splits(n, labels, config.train_ratio, config.repeats, config.seed)
    };
    let mut jobs = Vec::new();
    for &task in &config.tasks {
        let plan = plan_for(task)?;
        jobs.extend(plan.splits.into_iter().enumerate().map(|(r, s)| (task, r, s)));
    }

    let runner = Runner {
        rows: (0..fm.n_rows()).map(|i| fm.row(i).to_vec()).collect(),
        scores,
        binary,
        ordinal,
        grid,
        config,
    };
    let mut results = jobs
        .par_iter()
        .map(|(task, r, split)| {
            runner.run(*task, *r, split).map_err(|e| Error::Repeat {
                repeat: *r,
                task: task.name().to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|t| (t.task, t.repeat));

    let mut metrics = Vec::new();
    let mut selections = Vec::new();
    for &task in &config.tasks {
        let of_task: Vec<&TaskResult> = results.iter().filter(|t| t.task == task).collect();
        for (k, metric) in task.metrics().into_iter().enumerate() {
            metrics.push(MetricSummary::new(task, metric, of_task.iter().map(|t| t.values[k]).collect()));
        }
        selections.extend(of_task.iter().filter_map(|t| {
            t.selection.map(|(hp, cv_score)| Selection {
                task,
                repeat: t.repeat,
                hyperparams: hp,
                cv_score,
            })
        }));
    }
    Ok(BenchmarkReport {
        dataset: d.name.clone(),
        model: model_name.to_string(),
        n_samples: n,
        config: config.clone(),
        metrics,
        selections,
    })
}

fn check_scheme(s: &LabelingScheme, n: usize) -> Result<()> {
    if s.n_classes != n {
        return Err(Error::Validation(format!(
            "expected a {n}-class labeling, got {} classes",
            s.n_classes
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct RepeatRow {
    dataset: String,
    model: String,
    task: BenchTask,
    metric: Metric,
    repeat: usize,
    value: f64,
}

/// One row per dataset, model, task, metric and repeat.
pub fn write_repeats_csv(reports: &[BenchmarkReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    for r in reports {
        for m in &r.metrics {
            for (repeat, &value) in m.values.iter().enumerate() {
                w.serialize(RepeatRow {
                    dataset: r.dataset.clone(),
                    model: r.model.clone(),
                    task: m.task,
                    metric: m.metric,
                    repeat,
                    value,
                })
                .map_err(|e| Error::parse(path.display().to_string(), e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(dataset, model, task, metric, [(repeat, value)])`
type Cell = (String, String, BenchTask, Metric, Vec<(usize, f64)>);

/// Rebuilds aggregated summaries from a per-repeat table. Configuration and
/// selections are not stored there and come back as defaults.
pub fn read_repeats_csv(path: impl AsRef<Path>) -> Result<Vec<BenchmarkReport>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut reports: Vec<BenchmarkReport> = Vec::new();
    let mut cells: Vec<Cell> = Vec::new();
    for row in rdr.deserialize::<RepeatRow>() {
        let row = row.map_err(|e| Error::parse(path.display().to_string(), e))?;
        match cells
            .iter_mut()
            .find(|c| c.0 == row.dataset && c.1 == row.model && c.2 == row.task && c.3 == row.metric)
        {
            Some(c) => c.4.push((row.repeat, row.value)),
            None => cells.push((row.dataset, row.model, row.task, row.metric, vec![(row.repeat, row.value)])),
        }
    }
    for (dataset, model, task, metric, mut values) in cells {
        values.sort_by_key(|v| v.0);
        let summary = MetricSummary::new(task, metric, values.into_iter().map(|v| v.1).collect());
        match reports.iter_mut().find(|r| r.dataset == dataset && r.model == model) {
            Some(r) => r.metrics.push(summary),
            None => reports.push(BenchmarkReport {
                dataset,
                model,
                n_samples: 0,
                config: BenchmarkConfig::default(),
                metrics: vec![summary],
                selections: Vec::new(),
            }),
        }
    }
    Ok(reports)
}

/// `0.668` becomes `.668`, `-0.05` becomes `-.050`.
fn paper_decimal(v: f64) -> String {
    let s = format!("{v:.3}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

fn format_cell(metric: Metric, mean: f64) -> String {
    match metric {
        Metric::Accuracy | Metric::BalancedAccuracy => format!("{:.1}", 100.0 * mean),
        _ => paper_decimal(mean),
    }
}

/// Plain-text table per dataset: models as rows, task metric pairs as column
/// groups, cells holding the mean over repeats. Accuracies are in percent.
pub fn summary_table(reports: &[BenchmarkReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut out = String::new();
    for dataset in datasets {
        let block: Vec<&BenchmarkReport> = reports.iter().filter(|r| r.dataset == dataset).collect();
        let mut columns: Vec<(BenchTask, Metric)> = block
            .iter()
            .flat_map(|r| r.metrics.iter().map(|m| (m.task, m.metric)))
            .collect();
        columns.sort();
        columns.dedup();

        let mut header = vec!["Model".to_string()];
        let mut groups = vec![String::new()];
        for (task, metric) in &columns {
            groups.push(task.name().to_string());
            header.push(metric.header().to_string());
        }
        let mut rows = vec![groups, header];
        for r in &block {
            let mut row = vec![r.model.clone()];
            for &(task, metric) in &columns {
                row.push(r.get(task, metric).map_or("-".to_string(), |m| format_cell(metric, m.mean)));
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        out.push_str(&format!("Dataset: {dataset}\n"));
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 1 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}
