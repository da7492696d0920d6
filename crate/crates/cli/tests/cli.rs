use std::path::Path;
use std::process::{Command, Output};

use tdr_core::heat_sim;
use tdr_core::prognostics;
use tdr_core::{FamilyKind, FitConfig, SubspaceDims};

fn tdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdr")).args(args).env("TDR_THREADS", "2").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = tdr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, assets: &str, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", p(dir), "--assets", assets, "--seed", "3", "--diffusivity-scale", "0.4"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_a_readable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    simulate(&data, "6", &["--missing-rate", "0.5"]);
    let (manifest, streams) = heat_sim::read_dataset(&data).unwrap();
    assert_eq!(streams.len(), 6);
    assert_eq!(manifest.missing_rate, 0.5);
    assert!(streams.iter().all(|s| s.ttf.is_some()));
    assert!(streams.iter().any(|s| s.images.observed_count() < s.images.values().len()));
}

#[test]
fn zero_assets_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdr(&["simulate", "--out", p(dir.path()), "--assets", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn predict_without_model_is_a_usage_error() {
    let out = tdr(&["predict", "--data", "x", "--out", "y.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tdr(&["train", "--data", "x", "--model", "m", "--family", "cauchy"]);
    assert_eq!(out.status.code(), Some(2));
}

fn read_column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn train_then_predict_reproduces_in_sample_fit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    let preds = dir.path().join("preds.csv");
    simulate(&data, "15", &[]);
    ok(&["train", "--data", p(&data), "--model", p(&model), "--p1", "2", "--p2", "2", "--p3", "1", "--alpha", "0.5"]);
    ok(&["predict", "--data", p(&data), "--model", p(&model), "--out", p(&preds)]);

    let (_, streams) = heat_sim::read_dataset(&data).unwrap();
    let cfg = FitConfig {
        alpha: 0.5,
        family: FamilyKind::LOGNORMAL,
        tol_epsilon: 1e-6,
        max_iters: 200,
        seed: 0,
        ..FitConfig::default()
    };
    let trained = prognostics::train(&streams, SubspaceDims::new(2, 2, 1), &cfg).unwrap();
    assert_eq!(prognostics::load_model(&model).unwrap(), trained.model);

    let locations = read_column(&preds, "location");
    let errors = read_column(&preds, "abs_rel_error");
    for (m, s) in streams.iter().enumerate() {
        let fitted = tdr_core::lls::predict_distribution(&trained.model.lls, trained.features.row(m)).unwrap();
        assert!((locations[m] - fitted.location).abs() <= 1e-9 * fitted.location.abs().max(1.0));
        let want = prognostics::prediction_error(fitted.location.exp(), s.ttf.unwrap()).unwrap();
        assert!((errors[m] - want).abs() <= 1e-8 * want.max(1e-3));
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate(&a, "8", &["--missing-rate", "0.3", "--missing-pattern", "entry"]);
    simulate(&b, "8", &["--missing-rate", "0.3", "--missing-pattern", "entry"]);
    assert_eq!(heat_sim::read_dataset(&a).unwrap().1, heat_sim::read_dataset(&b).unwrap().1);

    let mut csvs = Vec::new();
    for k in 0..2 {
        let model = dir.path().join(format!("m{k}"));
        let preds = dir.path().join(format!("p{k}.csv"));
        ok(&["train", "--data", p(&a), "--model", p(&model), "--p1", "1", "--p2", "1", "--p3", "1"]);
        ok(&["predict", "--data", p(&a), "--model", p(&model), "--out", p(&preds)]);
        csvs.push(std::fs::read(&preds).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn cv_reports_a_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let table = dir.path().join("cv.csv");
    simulate(&data, "12", &[]);
    let stdout = ok(&["cv", "--data", p(&data), "--out", p(&table), "--max-p", "1", "--alphas", "0.2,0.8", "--folds", "3"]);
    assert!(stdout.contains("selected P=") && stdout.contains("alpha="), "{stdout}");
    assert_eq!(csv::Reader::from_path(&table).unwrap().records().count(), 2);
}

#[test]
fn benchmark_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let stdout = ok(&[
        "benchmark", "--out", p(&out), "--methods", "proposed-cv,mpca-97", "--missing-rates", "0,0.5", "--train", "12",
        "--test", "4", "--diffusivity-scale", "0.4", "--max-p", "1", "--alphas", "0.5", "--folds", "2", "--max-iters", "20",
    ]);
    assert!(stdout.contains("proposed-cv") && stdout.contains("mpca-97"), "{stdout}");
    let summary = std::fs::read(out.join("summary.csv")).unwrap();
    assert_eq!(csv::Reader::from_reader(summary.as_slice()).records().count(), 4);

    let errors = out.join("errors.csv");
    let before = std::fs::read(&errors).unwrap();
    let rebuilt = dir.path().join("rebuilt");
    ok(&["report", "--data", p(&out), "--out", p(&rebuilt)]);
    assert_eq!(std::fs::read(&errors).unwrap(), before);
    let medians = |path: &Path| read_column(path, "median");
    assert_eq!(medians(&out.join("summary.csv")), medians(&rebuilt.join("summary.csv")));
}

#[test]
fn empty_method_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = tdr(&["benchmark", "--out", p(dir.path()), "--methods", "", "--train", "4", "--test", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = tdr(&["benchmark", "--out", p(dir.path()), "--methods", "ppca"]);
    assert_eq!(out.status.code(), Some(1));
}
