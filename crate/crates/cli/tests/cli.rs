use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ugcqa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugcqa"))
        .args(args)
        .current_dir(cwd)
        .env_remove("UGCQA_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Deterministic uniform draws in (0, 1).
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        let (u, v) = (self.next(), self.next());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// Two modes at 2 and 4 on [1, 5], with one informative and two noise features.
fn write_bimodal(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let mut rng = Lcg(7);
    let mut manifest = String::from("# name = synth\n# range_min = 1\n# range_max = 5\n# kind = image\n");
    manifest.push_str("content_id,media_ref,mos,mos_sigma\n");
    let mut features = String::from("content_id,f0,f1,f2\n");
    for i in 0..n {
        let centre = if i % 2 == 0 { 2.0 } else { 4.0 };
        let mos = (centre + 0.3 * rng.normal()).clamp(1.0, 5.0);
        manifest.push_str(&format!("s{i:03},,{mos},\n"));
        features.push_str(&format!(
            "s{i:03},{},{},{}\n",
            mos + 0.2 * rng.normal(),
            rng.normal(),
            rng.normal()
        ));
    }
    let m = dir.join("manifest.csv");
    let f = dir.join("feats.csv");
    fs::write(&m, manifest).unwrap();
    fs::write(&f, features).unwrap();
    (m, f)
}

fn write_png(path: &Path, seed: u64) {
    let mut rng = Lcg(seed);
    let img = image::GrayImage::from_fn(48, 40, |x, y| {
        let base = 128.0 + 60.0 * ((x as f64 / 5.0).sin() + (y as f64 / 7.0).cos());
        image::Luma([(base + 20.0 * rng.normal()).clamp(0.0, 255.0) as u8])
    });
    img.save(path).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_labels_writes_scheme_histogram_and_plot_data() {
    let tmp = TempDir::new().unwrap();
    let (m, _) = write_bimodal(tmp.path(), 400);
    let out = tmp.path().join("labels");
    let res = ugcqa(&["fit-labels", "--manifest", s(&m), "--classes", "2", "--out", s(&out)], tmp.path());
    ok(&res);

    let scheme: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scheme.json")).unwrap()).unwrap();
    let t = scheme["thresholds"][0].as_f64().unwrap();
    assert!((t - 3.0).abs() < 0.1, "threshold {t}");
    assert_eq!(scheme["provenance"]["kind"], "fitted");

    let hist = fs::read_to_string(out.join("histogram.csv")).unwrap();
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 400);
    assert_eq!(fs::read_to_string(out.join("labels.csv")).unwrap().lines().count(), 401);

    let plot: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("plot.json")).unwrap()).unwrap();
    let grid: Vec<f64> = serde_json::from_value(plot["grid"].clone()).unwrap();
    let mixture: Vec<f64> = serde_json::from_value(plot["mixture"].clone()).unwrap();
    let components: Vec<Vec<f64>> = serde_json::from_value(plot["components"].clone()).unwrap();
    assert_eq!(components.len(), 2);
    let area: f64 = grid
        .windows(2)
        .zip(mixture.windows(2))
        .map(|(g, m)| 0.5 * (g[1] - g[0]) * (m[0] + m[1]))
        .sum();
    assert!((area - 1.0).abs() < 1e-6, "mixture area {area}");
    let edges: Vec<f64> = serde_json::from_value(plot["bin_edges"].clone()).unwrap();
    let density: Vec<f64> = serde_json::from_value(plot["bin_density"].clone()).unwrap();
    let mass: f64 = edges.windows(2).zip(&density).map(|(e, d)| (e[1] - e[0]) * d).sum();
    assert!((mass - 1.0).abs() < 1e-9);

    let echoed = fs::read_to_string(out.join("effective-config.toml")).unwrap();
    assert!(echoed.contains("classes = 2"), "{echoed}");
    assert!(echoed.contains("command = \"fit-labels\""));
}

#[test]
fn fit_labels_threshold_override_skips_fitting() {
    let tmp = TempDir::new().unwrap();
    let (m, _) = write_bimodal(tmp.path(), 60);
    let out = tmp.path().join("o");
    ok(&ugcqa(&["fit-labels", "--manifest", s(&m), "--thresholds", "2.2,3.5", "--out", s(&out)], tmp.path()));
    let scheme: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scheme.json")).unwrap()).unwrap();
    assert_eq!(scheme["thresholds"], serde_json::json!([2.2, 3.5]));
    assert_eq!(scheme["n_classes"], 3);
    assert!(!out.join("plot.json").exists());
}

#[test]
fn extract_three_images_is_three_by_36_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let media = tmp.path().join("media");
    fs::create_dir(&media).unwrap();
    let mut manifest = String::from("# name = tiny\n# range_min = 1\n# range_max = 5\n# kind = image\ncontent_id,media_ref,mos\n");
    for i in 0..3 {
        write_png(&media.join(format!("im{i}.png")), i + 1);
        manifest.push_str(&format!("im{i},media/im{i}.png,{}\n", 2.0 + i as f64));
    }
    let m = tmp.path().join("manifest.csv");
    fs::write(&m, manifest).unwrap();

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&ugcqa(&["extract", "--manifest", s(&m), "--out", s(&a)], tmp.path()));
    ok(&ugcqa(&["extract", "--manifest", s(&m), "--out", s(&b), "--workers", "1"], tmp.path()));
    let first = fs::read(a.join("features.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("features.csv")).unwrap());

    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 37));

    // the extracted table imports cleanly
    ok(&ugcqa(&["import-check", "--manifest", s(&m), "--features", s(&a.join("features.csv"))], tmp.path()));
}

#[test]
fn extract_frame_directory_pools_to_one_row() {
    let tmp = TempDir::new().unwrap();
    let clip = tmp.path().join("clip0");
    fs::create_dir(&clip).unwrap();
    for k in 0..3 {
        write_png(&clip.join(format!("frame{k:02}.png")), 10 + k);
    }
    let m = tmp.path().join("videos.csv");
    fs::write(&m, "# name = vids\n# range_min = 1\n# range_max = 5\n# kind = video\ncontent_id,media_ref,mos\nclip0,clip0,3.1\n").unwrap();
    let out = tmp.path().join("o");
    ok(&ugcqa(&["extract", "--manifest", s(&m), "--out", s(&out)], tmp.path()));
    let text = fs::read_to_string(out.join("features.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 37);
}

#[test]
fn import_check_reports_missing_ids_as_validation_errors() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 30);
    ok(&ugcqa(&["import-check", "--manifest", s(&m), "--features", s(&f)], tmp.path()));

    let text = fs::read_to_string(&f).unwrap();
    let trimmed: Vec<&str> = text.lines().filter(|l| !l.starts_with("s007,")).collect();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, trimmed.join("\n")).unwrap();
    let res = ugcqa(&["import-check", "--manifest", s(&m), "--features", s(&bad)], tmp.path());
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("s007"));
}

fn quick_benchmark(dir: &Path, m: &Path, f: &Path, out: &Path, tasks: &str) -> Output {
    ugcqa(
        &[
            "benchmark", "--manifest", s(m), "--features", s(f), "--tasks", tasks, "--repeats", "3", "--candidates",
            "3", "--folds", "3", "--seed", "11", "--out", s(out),
        ],
        dir,
    )
}

#[test]
fn regression_only_summary_has_srcc_and_plcc_columns() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let out = tmp.path().join("a");
    let res = quick_benchmark(tmp.path(), &m, &f, &out, "A");
    ok(&res);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let header = summary.lines().nth(2).unwrap();
    let columns: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(columns, ["Model", "SRCC", "PLCC"], "{summary}");
    assert!(!out.join("labels-binary.json").exists());
    let csv = fs::read_to_string(out.join("repeats.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
}

#[test]
fn benchmark_is_reproducible_under_a_fixed_seed() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&quick_benchmark(tmp.path(), &m, &f, &a, "A,B,RT,C"));
    ok(&quick_benchmark(tmp.path(), &m, &f, &b, "A,B,RT,C"));
    for name in ["report.json", "repeats.csv", "summary.txt", "labels-binary.json", "labels-ordinal.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"].as_array().unwrap().len(), 8);
    assert_eq!(report["model"], "feats");
}

#[test]
fn report_rebuilds_the_same_table_from_json_or_csv() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let out = tmp.path().join("run");
    ok(&quick_benchmark(tmp.path(), &m, &f, &out, "A,C"));
    let expected = fs::read_to_string(out.join("summary.txt")).unwrap();

    let from_json = ugcqa(&["report", s(&out.join("report.json"))], tmp.path());
    ok(&from_json);
    assert_eq!(String::from_utf8(from_json.stdout).unwrap(), expected);
    let from_csv = ugcqa(&["report", s(&out.join("repeats.csv")), "--out", s(&tmp.path().join("r"))], tmp.path());
    ok(&from_csv);
    assert_eq!(String::from_utf8(from_csv.stdout).unwrap(), expected);
    assert_eq!(fs::read_to_string(tmp.path().join("r/summary.txt")).unwrap(), expected);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "manifest = {:?}\nfeatures = {:?}\ntasks = [\"A\"]\nrepeats = 2\nseed = 5\nkernel = \"linear\"\n\n[grid]\ncandidates = 2\nfolds = 2\n",
            s(&m),
            s(&f)
        ),
    )
    .unwrap();
    let out = tmp.path().join("o");
    ok(&ugcqa(&["benchmark", "--config", s(&cfg), "--seed", "9", "--out", s(&out)], tmp.path()));
    let echoed: toml::Value = toml::from_str(&fs::read_to_string(out.join("effective-config.toml")).unwrap()).unwrap();
    assert_eq!(echoed["seed"].as_integer(), Some(9));
    assert_eq!(echoed["repeats"].as_integer(), Some(2));
    assert_eq!(echoed["kernel"].as_str(), Some("linear"));
    assert_eq!(echoed["ratio"].as_float(), Some(0.8));
    assert_eq!(echoed["grid"]["candidates"].as_integer(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["config"]["repeats"], 2);
}

#[test]
fn train_saves_a_loadable_model() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let out = tmp.path().join("o");
    ok(&ugcqa(
        &[
            "train", "--manifest", s(&m), "--features", s(&f), "--tasks", "B", "--candidates", "2", "--folds", "3",
            "--out", s(&out),
        ],
        tmp.path(),
    ));
    let model = ugcqa_core::TrainedModel::load(out.join("model.json")).unwrap();
    assert_eq!(model.task, ugcqa_core::Task::Binary);
    assert_eq!(model.n_samples, 60);
    assert!(out.join("scheme.json").exists());
    assert!(out.join("selection.json").exists());

    let res = ugcqa(&["train", "--manifest", s(&m), "--features", s(&f), "--tasks", "A,B"], tmp.path());
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn exit_codes_separate_validation_from_computation_failures() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 30);
    let run = |args: &[&str]| ugcqa(args, tmp.path()).status.code();

    assert_eq!(run(&["benchmark", "--manifest", s(&m), "--features", s(&f), "--ratio", "1.5"]), Some(1));
    assert_eq!(run(&["benchmark", "--manifest", s(&m), "--features", s(&f), "--repeats", "0"]), Some(1));
    assert_eq!(run(&["benchmark", "--manifest", s(&m), "--features", s(&f), "--tasks", "Z"]), Some(1));
    assert_eq!(run(&["fit-labels", "--manifest", "missing.csv"]), Some(1));
    assert_eq!(run(&["fit-labels"]), Some(1));
    assert_eq!(run(&["no-such-command"]), Some(1));
    assert_eq!(run(&["--help"]), Some(0));

    let flat = tmp.path().join("flat.csv");
    let mut text = String::from("# range_min = 1\n# range_max = 5\ncontent_id,mos\n");
    for i in 0..40 {
        text.push_str(&format!("c{i},3.0\n"));
    }
    fs::write(&flat, text).unwrap();
    assert_eq!(run(&["fit-labels", "--manifest", s(&flat), "--out", s(&tmp.path().join("x"))]), Some(2));
}

#[test]
fn inputs_are_left_untouched() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let before = (fs::read(&m).unwrap(), fs::read(&f).unwrap());
    ok(&quick_benchmark(tmp.path(), &m, &f, &tmp.path().join("o"), "B"));
    assert_eq!(before, (fs::read(&m).unwrap(), fs::read(&f).unwrap()));
}

#[test]
fn each_thresholds_flag_sets_its_own_scheme() {
    let tmp = TempDir::new().unwrap();
    let (m, f) = write_bimodal(tmp.path(), 60);
    let out = tmp.path().join("o");
    ok(&ugcqa(
        &[
            "benchmark", "--manifest", s(&m), "--features", s(&f), "--tasks", "B,C", "--repeats", "1", "--candidates",
            "2", "--folds", "2", "--thresholds", "3.0", "--thresholds", "2.5,3.5", "--out", s(&out),
        ],
        tmp.path(),
    ));
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(out.join(name)).unwrap()).unwrap()
    };
    assert_eq!(read("labels-binary.json")["thresholds"], serde_json::json!([3.0]));
    assert_eq!(read("labels-ordinal.json")["thresholds"], serde_json::json!([2.5, 3.5]));
    let echoed = fs::read_to_string(out.join("effective-config.toml")).unwrap();
    assert!(echoed.contains("classes = 3"), "{echoed}");
}
