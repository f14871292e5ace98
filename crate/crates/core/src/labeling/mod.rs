//! MOS discretization: mixture fitting, class boundaries and labeling schemes.

mod gmm;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ScoreRange};
use crate::error::{Error, Result};

pub use gmm::{fit_gmm, EmConfig, GmmComponent, GmmModel};

/// Grid resolution of the boundary scan in [`thresholds`].
pub const THRESHOLD_GRID_POINTS: usize = 10_000;
/// Absolute bisection tolerance for each boundary.
pub const THRESHOLD_TOLERANCE: f64 = 1e-8;

/// Locates the points where the posterior argmax moves from component k to k+1.
///
/// Scans a uniform grid over `search_range` and bisects every class change. Each
/// returned value is the largest point found that still maps to the lower class.
pub fn thresholds(model: &GmmModel, search_range: ScoreRange) -> Result<Vec<f64>> {
    let n = model.n_components();
    if n < 2 {
        return Err(Error::Validation("thresholds need at least two components".into()));
    }
    let step = search_range.len() / (THRESHOLD_GRID_POINTS - 1) as f64;
    let at = |i: usize| {
        if i == THRESHOLD_GRID_POINTS - 1 {
            search_range.max
        } else {
            search_range.min + step * i as f64
        }
    };

    let mut switches = Vec::new();
    let mut prev = model.argmax(at(0));
    let mut sequence = vec![prev];
    for i in 1..THRESHOLD_GRID_POINTS {
        let class = model.argmax(at(i));
        if class != prev {
            switches.push((at(i - 1), at(i), prev));
            sequence.push(class);
            prev = class;
        }
    }
    if switches.len() != n - 1 {
        return Err(Error::ThresholdCount {
            expected: n - 1,
            found: switches.len(),
        });
    }
    if sequence.iter().enumerate().any(|(k, &c)| c != k) {
        return Err(Error::Degenerate(format!(
            "class regions are not ordered by mean: argmax sequence {sequence:?}"
        )));
    }

    Ok(switches
        .into_iter()
        .map(|(mut lo, mut hi, lower)| {
            while hi - lo > THRESHOLD_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if model.argmax(mid) <= lower {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        })
        .collect())
}

/// Where a scheme's thresholds came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Fitted { em: EmConfig, model: GmmModel },
    PaperOverride,
}

/// Ordered class boundaries over a score range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingScheme {
    pub n_classes: usize,
    pub thresholds: Vec<f64>,
    pub class_names: Vec<String>,
    pub provenance: Provenance,
}

pub fn default_class_names(n: usize) -> Vec<String> {
    let names: &[&str] = match n {
        2 => &["low", "high"],
        3 => &["low", "medium", "high"],
        5 => &["bad", "poor", "fair", "good", "excellent"],
        _ => &[],
    };
    if names.is_empty() {
        (0..n).map(|k| format!("class{k}")).collect()
    } else {
        names.iter().map(|s| s.to_string()).collect()
    }
}

impl LabelingScheme {
    /// A scheme from explicit thresholds, e.g. published values.
    pub fn from_thresholds(thresholds: Vec<f64>, range: ScoreRange) -> Result<Self> {
        let scheme = LabelingScheme {
            n_classes: thresholds.len() + 1,
            class_names: default_class_names(thresholds.len() + 1),
            thresholds,
            provenance: Provenance::PaperOverride,
        };
        scheme.validate(range)?;
        Ok(scheme)
    }

    /// Fits an `n_classes` mixture to the dataset scores and derives its boundaries.
    pub fn fit(d: &Dataset, n_classes: usize, em: &EmConfig) -> Result<Self> {
        let em = EmConfig {
            score_range: em.score_range.or(Some(d.score_range())),
            ..em.clone()
        };
        let model = fit_gmm(&d.scores(), n_classes, &em)?;
        Self::from_model(model, em, d.score_range())
    }

    pub fn from_model(model: GmmModel, em: EmConfig, range: ScoreRange) -> Result<Self> {
        let n = model.n_components();
        let thresholds = thresholds(&model, range)?;
        let scheme = LabelingScheme {
            n_classes: n,
            thresholds,
            class_names: default_class_names(n),
            provenance: Provenance::Fitted { em, model },
        };
        scheme.validate(range)?;
        Ok(scheme)
    }

    pub fn validate(&self, range: ScoreRange) -> Result<()> {
        if self.n_classes < 2 || self.thresholds.len() != self.n_classes - 1 {
            return Err(Error::Validation(format!(
                "{} classes need {} thresholds, got {}",
                self.n_classes,
                self.n_classes.saturating_sub(1),
                self.thresholds.len()
            )));
        }
        if self.class_names.len() != self.n_classes {
            return Err(Error::Validation("one class name per class required".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "thresholds {:?} are not strictly increasing",
                self.thresholds
            )));
        }
        if let Some(t) = self
            .thresholds
            .iter()
            .find(|&&t| !(t > range.min && t < range.max))
        {
            return Err(Error::Validation(format!(
                "threshold {t} not strictly inside {range}"
            )));
        }
        Ok(())
    }

    /// Class index of a score: the number of thresholds strictly below it.
    pub fn class_of(&self, y: f64) -> usize {
        self.thresholds.iter().filter(|&&t| t < y).count()
    }

    pub fn discretize_scores(&self, scores: &[f64]) -> Vec<usize> {
        scores.iter().map(|&y| self.class_of(y)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

/// Per-sample class labels plus the class histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub classes: Vec<usize>,
    pub histogram: Vec<usize>,
}

impl Labels {
    pub fn from_classes(classes: Vec<usize>, n_classes: usize) -> Self {
        let mut histogram = vec![0; n_classes];
        for &c in &classes {
            histogram[c] += 1;
        }
        Labels { classes, histogram }
    }
}

/// Tags every sample of `d` with its class under `scheme`.
pub fn discretize(d: &Dataset, scheme: &LabelingScheme) -> Result<Labels> {
    scheme.validate(d.score_range())?;
    Ok(Labels::from_classes(
        scheme.discretize_scores(&d.scores()),
        scheme.n_classes,
    ))
}

/// Histogram and component curves for rendering a fitted mixture over the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotData {
    pub bin_edges: Vec<f64>,
    /// Normalized to a density (integrates to 1 over the bins).
    pub bin_density: Vec<f64>,
    pub grid: Vec<f64>,
    /// `components[k][i]`: weighted density of component k at `grid[i]`.
    pub components: Vec<Vec<f64>>,
    pub mixture: Vec<f64>,
}

pub fn plot_data(model: &GmmModel, scores: &[f64], range: ScoreRange, bins: usize, grid_points: usize) -> PlotData {
    let width = range.len() / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|i| range.min + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &y in scores {
        let b = (((y - range.min) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    let total = scores.len().max(1) as f64;
    let bin_density = counts.iter().map(|&c| c as f64 / (total * width)).collect();

    // curves reach 8 sd past every component so their area is the full mass
    let (lo, hi) = model.components.iter().fold((range.min, range.max), |(lo, hi), c| {
        let reach = 8.0 * c.variance.sqrt();
        (lo.min(c.mean - reach), hi.max(c.mean + reach))
    });
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    let components: Vec<Vec<f64>> = model
        .components
        .iter()
        .map(|c| grid.iter().map(|&y| c.log_weighted_density(y).exp()).collect())
        .collect();
    let mixture = (0..grid_points)
        .map(|i| components.iter().map(|c| c[i]).sum())
        .collect();
    PlotData {
        bin_edges,
        bin_density,
        grid,
        components,
        mixture,
    }
}
