use std::env;
use std::path::{Path, PathBuf};

use serde::Serialize;
use ugcqa_core::evaluation::{read_repeats_csv, summary_table, write_repeats_csv};
use ugcqa_core::features::{extract_dataset, FeatureCache};
use ugcqa_core::labeling::{discretize, plot_data, Provenance};
use ugcqa_core::learner::{random_grid_search, train_task, GridSpace, SmoConfig, Targets};
use ugcqa_core::{
    import_features, load_manifest, run_benchmark, BenchTask, BenchmarkConfig, BenchmarkReport, Dataset, EmConfig,
    FeatureMatrix, Hyperparams, LabelingScheme, Labelings, Task,
};

use crate::config::{FeatureSource, RunConfig};
use crate::{write_output, Failure};

const PLOT_BINS: usize = 40;
const PLOT_GRID_POINTS: usize = 2001;

fn cache() -> Option<FeatureCache> {
    env::var_os("UGCQA_CACHE_DIR")
        .filter(|v| !v.is_empty())
        .map(FeatureCache::new)
}

fn load_features(config: &RunConfig, d: &Dataset) -> Result<FeatureMatrix, Failure> {
    Ok(match &config.features {
        FeatureSource::Brisque => extract_dataset(d, cache().as_ref())?,
        FeatureSource::Import(p) => import_features(p, d)?,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::computation(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Fixed thresholds for an `n`-class scheme, if configured.
fn override_for(config: &RunConfig, n: usize) -> Result<Option<Vec<f64>>, Failure> {
    if n == 2 {
        return Ok(config.binary_threshold.map(|t| vec![t]));
    }
    match &config.ordinal_thresholds {
        Some(t) if t.len() + 1 == n => Ok(Some(t.clone())),
        Some(t) => Err(Failure::validation(format!(
            "{} ordinal thresholds given for {n} classes",
            t.len()
        ))),
        None => Ok(None),
    }
}

/// The `n`-class scheme: configured thresholds if present, otherwise a mixture fit.
fn scheme(config: &RunConfig, d: &Dataset, n: usize) -> Result<LabelingScheme, Failure> {
    if let Some(t) = override_for(config, n)? {
        return Ok(LabelingScheme::from_thresholds(t, d.score_range())?);
    }
    let em = EmConfig {
        restarts: config.restarts,
        seed: config.seed,
        ..EmConfig::default()
    };
    Ok(LabelingScheme::fit(d, n, &em)?)
}

pub fn fit_labels(config: &RunConfig) -> Result<(), Failure> {
    let d = load_manifest(config.manifest()?)?;
    let n = config.classes;
    config.echo()?;
    let scheme = scheme(config, &d, n)?;
    let labels = discretize(&d, &scheme)?;
    let out = &config.out;
    scheme.save(out.join("scheme.json"))?;

    let mut rows = String::from("content_id,mos,class\n");
    for (s, c) in d.samples().iter().zip(&labels.classes) {
        rows.push_str(&format!("{},{:?},{c}\n", csv_field(&s.content_id), s.mos));
    }
    write_output(&out.join("labels.csv"), rows.as_bytes())?;

    let range = d.score_range();
    let mut hist = String::from("class,name,lower,upper,count\n");
    for (k, &count) in labels.histogram.iter().enumerate() {
        let lower = if k == 0 { range.min } else { scheme.thresholds[k - 1] };
        let upper = scheme.thresholds.get(k).copied().unwrap_or(range.max);
        hist.push_str(&format!(
            "{k},{},{lower:?},{upper:?},{count}\n",
            csv_field(&scheme.class_names[k])
        ));
    }
    write_output(&out.join("histogram.csv"), hist.as_bytes())?;

    if let Provenance::Fitted { model, .. } = &scheme.provenance {
        let pd = plot_data(model, &d.scores(), range, PLOT_BINS, PLOT_GRID_POINTS);
        write_output(&out.join("plot.json"), &json(&pd)?)?;
    }

    println!("dataset {} ({} samples), {} classes", d.name, d.len(), scheme.n_classes);
    println!(
        "thresholds: {}",
        scheme.thresholds.iter().map(|t| format!("{t:.4}")).collect::<Vec<_>>().join(", ")
    );
    for (name, count) in scheme.class_names.iter().zip(&labels.histogram) {
        println!("  {name:>10}  {count}");
    }
    Ok(())
}

pub fn extract(config: &RunConfig) -> Result<(), Failure> {
    let d = load_manifest(config.manifest()?)?;
    config.echo()?;
    let fm = extract_dataset(&d, cache().as_ref())?;
    let path = config.out.join("features.csv");
    fm.save(&path)?;
    println!("{} x {} features written to {}", fm.n_rows(), fm.dim(), path.display());
    Ok(())
}

pub fn import_check(config: &RunConfig) -> Result<(), Failure> {
    let d = load_manifest(config.manifest()?)?;
    let FeatureSource::Import(path) = &config.features else {
        return Err(Failure::validation("import-check needs --features <table>"));
    };
    let fm = import_features(path, &d)?;
    println!(
        "{}: {} rows x {} features, aligned with {} ({} samples)",
        path.display(),
        fm.n_rows(),
        fm.dim(),
        d.name,
        d.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    task: BenchTask,
    hyperparams: Hyperparams,
    cv_score: f64,
    n_samples: usize,
}

pub fn train(config: &RunConfig) -> Result<(), Failure> {
    let &[bench_task] = config.tasks.as_slice() else {
        return Err(Failure::validation("train takes exactly one task in --tasks"));
    };
    let d = load_manifest(config.manifest()?)?;
    config.echo()?;
    let fm = load_features(config, &d)?;
    fm.check_alignment(&d)?;
    let rows = fm.select(&(0..fm.n_rows()).collect::<Vec<_>>());
    let scores = d.scores();

    let (task, scheme) = match bench_task {
        BenchTask::Regression => (Task::Regression, None),
        BenchTask::Binary => (Task::Binary, Some(scheme(config, &d, 2)?)),
        BenchTask::Ordinal => {
            let n = config.classes;
            (Task::Ordinal { n_classes: n }, Some(scheme(config, &d, n)?))
        }
        BenchTask::BinaryViaRegression => {
            return Err(Failure::validation(
                "binary-via-regression has no model of its own; train task A instead",
            ))
        }
    };
    let classes = scheme.as_ref().map(|s| s.discretize_scores(&scores));
    let targets = match &classes {
        Some(c) => Targets::Classes(c),
        None => Targets::Scores(&scores),
    };

    let range = d.score_range();
    let space = config
        .grid
        .space(config.kernel, range)
        .unwrap_or_else(|| GridSpace::default_for(range.len()).with_kernel(config.kernel));
    let space = GridSpace {
        class_weighting: config.grid.class_weighting,
        ..space
    };
    let smo = SmoConfig::default();
    let search = random_grid_search(
        task,
        &rows,
        &targets,
        &space,
        config.grid.candidates,
        config.grid.folds,
        config.seed,
        &smo,
    )?;
    let model = train_task(task, &rows, &targets, &search.best, config.seed, &smo)?;

    let out = &config.out;
    model.save(out.join("model.json"))?;
    if let Some(s) = &scheme {
        s.save(out.join("scheme.json"))?;
    }
    let summary = TrainSummary {
        task: bench_task,
        hyperparams: search.best,
        cv_score: search.best_score,
        n_samples: rows.len(),
    };
    write_output(&out.join("selection.json"), &json(&summary)?)?;
    println!(
        "{} model on {} samples: C={} gamma={} epsilon={} (cv score {:.4})",
        bench_task,
        rows.len(),
        search.best.c,
        search.best.gamma,
        search.best.epsilon,
        search.best_score
    );
    Ok(())
}

pub fn benchmark(config: &RunConfig) -> Result<(), Failure> {
    let d = load_manifest(config.manifest()?)?;
    config.echo()?;
    let fm = load_features(config, &d)?;
    let has = |t: BenchTask| config.tasks.contains(&t);
    let binary = (has(BenchTask::Binary) || has(BenchTask::BinaryViaRegression))
        .then(|| scheme(config, &d, 2))
        .transpose()?;
    let ordinal = has(BenchTask::Ordinal)
        .then(|| scheme(config, &d, config.classes))
        .transpose()?;

    let bench = BenchmarkConfig {
        tasks: config.tasks.clone(),
        repeats: config.repeats,
        train_ratio: config.ratio,
        seed: config.seed,
        n_candidates: config.grid.candidates,
        k_folds: config.grid.folds,
        kernel: config.kernel,
        class_weighting: config.grid.class_weighting,
        plcc_logistic: config.plcc_logistic,
        grid: config.grid.space(config.kernel, d.score_range()),
        smo: SmoConfig::default(),
    };
    let labelings = Labelings {
        binary: binary.as_ref(),
        ordinal: ordinal.as_ref(),
    };
    let report = run_benchmark(&d, &fm, &config.model_name, labelings, &bench)?;

    let out = &config.out;
    if let Some(s) = &binary {
        s.save(out.join("labels-binary.json"))?;
    }
    if let Some(s) = &ordinal {
        s.save(out.join("labels-ordinal.json"))?;
    }
    report.save(out.join("report.json"))?;
    let reports = [report];
    write_repeats_csv(&reports, out.join("repeats.csv"))?;
    let table = summary_table(&reports);
    write_output(&out.join("summary.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let mut reports: Vec<BenchmarkReport> = Vec::new();
    for p in inputs {
        if is_csv(p) {
            reports.extend(read_repeats_csv(p)?);
        } else {
            reports.push(BenchmarkReport::load(p)?);
        }
    }
    let table = summary_table(&reports);
    if let Some(dir) = out {
        write_output(&dir.join("summary.txt"), table.as_bytes())?;
    }
    print!("{table}");
    Ok(())
}
