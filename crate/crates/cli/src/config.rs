//! Run configuration. Command-line flags win over the TOML file, which wins over defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use ugcqa_core::learner::{ClassWeighting, GridSpace};
use ugcqa_core::{BenchTask, KernelKind, ScoreRange};

use crate::Failure;

/// Flags shared by every pipeline subcommand.
#[derive(Debug, Default, Clone, Args)]
pub struct RunArgs {
    /// TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `brisque` for built-in extraction, otherwise a feature table to import.
    #[arg(long)]
    pub features: Option<String>,
    /// Number of classes to fit (ordinal classes for `benchmark`).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Fixed class boundaries `a,b,...`. One value sets the binary scheme, several
    /// the ordinal one. May be given twice.
    #[arg(long)]
    pub thresholds: Vec<String>,
    /// Comma-separated task letters: A, B, C, or RT for binary via regression.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Training fraction of each split.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// `rbf` or `linear`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Fit a 4-parameter logistic before computing PLCC.
    #[arg(long)]
    pub plcc_logistic: bool,
    /// EM restarts when fitting labels.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Grid points sampled per search.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Cross-validation folds per search.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Row name in summary tables; defaults to the feature source.
    #[arg(long)]
    pub model_name: Option<String>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifest: Option<PathBuf>,
    features: Option<String>,
    classes: Option<usize>,
    binary_threshold: Option<f64>,
    ordinal_thresholds: Option<Vec<f64>>,
    tasks: Option<Vec<String>>,
    seed: Option<u64>,
    repeats: Option<usize>,
    ratio: Option<f64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    kernel: Option<String>,
    plcc_logistic: Option<bool>,
    restarts: Option<usize>,
    model_name: Option<String>,
    #[serde(default)]
    grid: FileGrid,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGrid {
    candidates: Option<usize>,
    folds: Option<usize>,
    class_weighting: Option<ClassWeighting>,
    c: Option<Vec<f64>>,
    gamma: Option<Vec<f64>>,
    epsilon: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(into = "String")]
pub enum FeatureSource {
    Brisque,
    Import(PathBuf),
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSource::Brisque => f.write_str(ugcqa_core::features::BRISQUE_SET_NAME),
            FeatureSource::Import(p) => write!(f, "{}", p.display()),
        }
    }
}

impl From<FeatureSource> for String {
    fn from(s: FeatureSource) -> String {
        s.to_string()
    }
}

impl FeatureSource {
    fn parse(s: &str) -> Self {
        if s.eq_ignore_ascii_case(ugcqa_core::features::BRISQUE_SET_NAME) {
            FeatureSource::Brisque
        } else {
            FeatureSource::Import(PathBuf::from(s))
        }
    }

    pub fn default_model_name(&self) -> String {
        match self {
            FeatureSource::Brisque => "BRISQUE".into(),
            FeatureSource::Import(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "imported".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSettings {
    pub candidates: usize,
    pub folds: usize,
    pub class_weighting: ClassWeighting,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
}

impl GridSettings {
    /// `None` when every axis keeps its default for the score range.
    pub fn space(&self, kernel: KernelKind, range: ScoreRange) -> Option<GridSpace> {
        if self.c.is_none() && self.gamma.is_none() && self.epsilon.is_none() {
            return None;
        }
        let d = GridSpace::default_for(range.len());
        Some(GridSpace {
            kernel,
            c: self.c.clone().unwrap_or(d.c),
            gamma: self.gamma.clone().unwrap_or(d.gamma),
            epsilon: self.epsilon.clone().unwrap_or(d.epsilon),
            class_weighting: self.class_weighting,
        })
    }
}

/// The effective settings of one invocation, echoed next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    pub features: FeatureSource,
    /// Classes fitted by `fit-labels`; ordinal classes elsewhere.
    pub classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binary_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordinal_thresholds: Option<Vec<f64>>,
    #[serde(serialize_with = "task_names")]
    pub tasks: Vec<BenchTask>,
    pub seed: u64,
    pub repeats: usize,
    pub ratio: f64,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub kernel: KernelKind,
    pub plcc_logistic: bool,
    pub restarts: usize,
    pub model_name: String,
    pub grid: GridSettings,
}

fn task_names<S: serde::Serializer>(tasks: &[BenchTask], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(tasks.iter().map(|t| t.name()))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::validation(msg)
}

fn parse_f64(s: &str) -> Result<f64, Failure> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| invalid(format!("bad threshold `{s}`: {e}")))
}

impl RunConfig {
    pub fn resolve(command: &str, args: &RunArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };

        // each --thresholds occurrence is routed by its length
        let (mut binary_threshold, mut ordinal_thresholds) = (file.binary_threshold, file.ordinal_thresholds);
        for raw in &args.thresholds {
            let values = raw.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
            if values.len() == 1 {
                binary_threshold = Some(values[0]);
            } else {
                ordinal_thresholds = Some(values);
            }
        }

        let tasks = match args.tasks.as_ref().or(file.tasks.as_ref()) {
            Some(list) => list
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<BenchTask>())
                .collect::<ugcqa_core::Result<Vec<_>>>()?,
            None => vec![BenchTask::Regression, BenchTask::Binary, BenchTask::Ordinal],
        };
        let mut tasks = tasks;
        tasks.sort();
        tasks.dedup();

        let kernel = match args.kernel.as_ref().or(file.kernel.as_ref()) {
            Some(k) => k.parse::<KernelKind>()?,
            None => KernelKind::Rbf,
        };
        let features = FeatureSource::parse(
            args.features
                .as_deref()
                .or(file.features.as_deref())
                .unwrap_or(ugcqa_core::features::BRISQUE_SET_NAME),
        );
        let model_name = args
            .model_name
            .clone()
            .or(file.model_name)
            .unwrap_or_else(|| features.default_model_name());

        let classes = args.classes.or(file.classes).unwrap_or(match (&ordinal_thresholds, binary_threshold) {
            (Some(t), None) if command == "fit-labels" => t.len() + 1,
            _ if command == "fit-labels" => 2,
            (Some(t), _) => t.len() + 1,
            (None, _) => 3,
        });
        let config = RunConfig {
            command: command.to_string(),
            manifest: args.manifest.clone().or(file.manifest),
            features,
            classes,
            binary_threshold,
            ordinal_thresholds,
            tasks,
            seed: args.seed.or(file.seed).unwrap_or(0),
            repeats: args.repeats.or(file.repeats).unwrap_or(20),
            ratio: args.ratio.or(file.ratio).unwrap_or(0.8),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("ugcqa-out")),
            workers: args.workers.or(file.workers),
            kernel,
            plcc_logistic: args.plcc_logistic || file.plcc_logistic.unwrap_or(false),
            restarts: args.restarts.or(file.restarts).unwrap_or(1),
            model_name,
            grid: GridSettings {
                candidates: args.candidates.or(file.grid.candidates).unwrap_or(32),
                folds: args.folds.or(file.grid.folds).unwrap_or(5),
                class_weighting: file.grid.class_weighting.unwrap_or(ClassWeighting::Balanced),
                c: file.grid.c,
                gamma: file.grid.gamma,
                epsilon: file.grid.epsilon,
            },
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.tasks.is_empty() {
            return Err(invalid("task list is empty"));
        }
        if self.repeats < 1 {
            return Err(invalid("repeats must be at least 1"));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(invalid(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be at least 1"));
        }
        if self.restarts < 1 {
            return Err(invalid("restarts must be at least 1"));
        }
        if self.classes < 2 {
            return Err(invalid("classes must be at least 2"));
        }
        Ok(())
    }

    pub fn manifest(&self) -> Result<&Path, Failure> {
        self.manifest
            .as_deref()
            .ok_or_else(|| invalid("no manifest given (use --manifest or `manifest` in the config file)"))
    }

    /// Writes the effective configuration into the output directory.
    pub fn echo(&self) -> Result<(), Failure> {
        let text = toml::to_string_pretty(self).map_err(|e| Failure::computation(e.to_string()))?;
        crate::write_output(&self.out.join("effective-config.toml"), text.as_bytes())
    }
}
