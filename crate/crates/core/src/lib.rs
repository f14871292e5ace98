//! Benchmarking toolkit for no-reference quality assessment of user-generated content.
//!
//! Continuous mean opinion scores are discretized into binary and ordinal quality
//! classes with a one-dimensional Gaussian mixture ([`labeling`]). Per-sample
//! features come from a built-in natural-scene-statistics extractor or from imported
//! tables ([`features`]). Support vector learners cover regression, binary and
//! ordinal classification ([`learner`]), and [`evaluation`] runs the repeated
//! 80/20 split protocol and aggregates the six task metrics.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod labeling;
pub mod learner;

pub use dataset::{load_manifest, save_manifest, Dataset, MediaKind, Sample, ScoreRange};
pub use error::{Error, Result};
pub use labeling::{fit_gmm, EmConfig, GmmModel, LabelingScheme, Labels};
pub use evaluation::{run_benchmark, BenchTask, BenchmarkConfig, BenchmarkReport, Labelings, Metric, SplitPlan};
pub use features::{import_features, FeatureMatrix};
pub use learner::{
    random_grid_search, regress_then_threshold, train_ordinal, train_svc, train_svr, Hyperparams, KernelKind,
    Predictions, Task, TrainedModel,
};
