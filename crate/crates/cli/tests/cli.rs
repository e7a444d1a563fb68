use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poakit::detect::split_precursor_prediction;
use poakit::io::{read_detection, read_json, read_labels_csv, sha256_file, write_json};
use poakit::metrics::{evaluate, even_grid, MetricParams, MetricSelection};
use poakit::synth::SynthConfig;

fn poakit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poakit"))
        .args(args)
        .env_remove("POAKIT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = poakit(args);
    assert!(
        out.status.success(),
        "poakit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(dir: &Path) -> PathBuf {
    let cfg = SynthConfig {
        length: 1500,
        train_length: 1200,
        anomalies: SynthConfig::default().anomalies.into_iter().take(2).collect(),
        ..SynthConfig::default()
    };
    let cfg_path = dir.join("synth.json");
    write_json(&cfg_path, &cfg).unwrap();
    let data = dir.join("data");
    ok(&["synth", "--config", s(&cfg_path), "--out", s(&data)]);
    data
}

fn json(path: &Path) -> serde_json::Value {
    read_json(path).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert!(poakit(&["--help"]).status.success());
    assert!(poakit(&["--version"]).status.success());
    assert!(poakit(&["evaluate", "--help"]).status.success());
}

#[test]
fn errors_are_single_lines_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = poakit(&["evaluate", "--detection", s(&missing), "--labels", s(&missing), "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error[E_IO]: "), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = poakit(&["sweep", "--param", "theta", "--values", "1", "--detection", "a", "--labels", "b", "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[E_VALIDATION]: "));

    let bad = dir.path().join("labels.csv");
    std::fs::write(&bad, "timestamp,label\n0,0\n2,1\n").unwrap();
    let det = dir.path().join("det.csv");
    std::fs::write(&det, "timestamp,flag\n0,0\n1,1\n").unwrap();
    let out = poakit(&["evaluate", "--detection", s(&det), "--labels", s(&bad), "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("labels.csv:3"), "{err}");

    let out = poakit(&["evaluate", "--k", "0", "--detection", s(&det), "--labels", s(&det), "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_seed_precedence_holds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", "--out", s(&a)]);
    ok(&["synth", "--out", s(&b)]);
    for f in ["train.csv", "test.csv", "labels.csv", "precursors.csv", "manifest.json"] {
        assert_eq!(sha256_file(a.join(f)).unwrap(), sha256_file(b.join(f)).unwrap(), "{f}");
    }

    let env_dir = dir.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_poakit"))
        .args(["synth", "--out", s(&env_dir)])
        .env("POAKIT_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&env_dir.join("config.json"))["seed"], 7);
    assert_ne!(
        sha256_file(env_dir.join("test.csv")).unwrap(),
        sha256_file(a.join("test.csv")).unwrap()
    );

    let flag_dir = dir.path().join("flag");
    let out = Command::new(env!("CARGO_BIN_EXE_poakit"))
        .args(["synth", "--seed", "9", "--out", s(&flag_dir)])
        .env("POAKIT_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&flag_dir.join("config.json"))["seed"], 9);
}

#[test]
fn staged_commands_match_the_library_and_the_one_shot_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let fc = dir.path().join("fc");
    let staged = dir.path().join("staged");
    let one_shot = dir.path().join("run");
    let window = ["--input-len", "60", "--horizon", "12"];

    let (train, test) = (data.join("train.csv"), data.join("test.csv"));
    let mut forecast = vec!["forecast", "--train", s(&train), "--test", s(&test), "--out", s(&fc), "--format", "ndjson"];
    forecast.extend(window);
    ok(&forecast);
    assert!(fc.join("scoreboard.csv").exists());

    let scores = staged.join("scores.csv");
    let valid_fc = fc.join("valid_forecasts.ndjson");
    let test_fc = fc.join("test_forecasts.ndjson");
    ok(&["score", "--forecasts", s(&test_fc), "--valid-forecasts", s(&valid_fc), "--out", s(&scores)]);
    assert!(staged.join("horizon_stats.json").exists());
    let labels = data.join("labels.csv");
    let detection = staged.join("detection.csv");
    ok(&["detect", "--scores", s(&scores), "--labels", s(&labels), "--delta", "12", "--out", s(&detection)]);
    let meta = json(&staged.join("detection.csv.meta.json"));
    assert_eq!(meta["metric"], "ptapr-f1");
    let report_path = staged.join("report.json");
    ok(&["evaluate", "--detection", s(&detection), "--labels", s(&labels), "--delta", "12", "--out", s(&report_path)]);
    assert!(staged.join("theta_curve.csv").exists());
    let report = json(&report_path);

    // same numbers through the library
    let (_, det) = read_detection(&detection).unwrap();
    let (_, label_seq) = read_labels_csv(&labels, 0).unwrap();
    let params = MetricParams {
        delta: 12,
        ..MetricParams::default()
    };
    let set = split_precursor_prediction(det.flags(), &label_seq.segments(), params.delta).unwrap();
    let lib = evaluate(&set, &params, &even_grid(101), MetricSelection::default()).unwrap();
    assert_eq!(report["ptapr_f1"].as_f64().unwrap(), lib.ptapr_f1);
    assert_eq!(report["auc"].as_f64().unwrap(), lib.auc);
    assert_eq!(report["pak"]["auc"].as_f64().unwrap(), lib.pak.as_ref().unwrap().auc);

    // the one-shot run with the same window agrees on the detection
    let cfg_path = dir.path().join("pipeline.json");
    std::fs::write(&cfg_path, r#"{"window": {"input_len": 60, "horizon_len": 12, "stride": 1}}"#).unwrap();
    ok(&["run", "--data", s(&data), "--config", s(&cfg_path), "--out", s(&one_shot)]);
    let (_, run_det) = read_detection(one_shot.join("detection.csv")).unwrap();
    assert_eq!(run_det.flags(), det.flags());
    for f in ["summary.json", "timeline.csv", "theta_curve.csv", "manifest.json", "report.json"] {
        assert!(one_shot.join(f).exists(), "{f}");
    }

    // report on the staged directory
    std::fs::copy(&labels, staged.join("labels.csv")).unwrap();
    ok(&["report", s(&staged)]);
    let summary = json(&staged.join("summary.json"));
    assert_eq!(summary["ptapr_f1"], report["ptapr_f1"]);
    let timeline = std::fs::read_to_string(staged.join("timeline.csv")).unwrap();
    assert_eq!(timeline.lines().next(), Some("timestamp,score,lead_time,label,flag"));
    assert_eq!(timeline.lines().count(), 1 + label_seq.len());
}

#[test]
fn k_sweep_and_normalization_ablation_on_the_default_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data)]);
    let norm = dir.path().join("norm");
    let raw = dir.path().join("raw");
    ok(&["run", "--data", s(&data), "--out", s(&norm)]);
    ok(&["run", "--data", s(&data), "--no-normalize", "--out", s(&raw)]);
    let f_norm = json(&norm.join("report.json"))["ptapr_f1"].as_f64().unwrap();
    let f_raw = json(&raw.join("report.json"))["ptapr_f1"].as_f64().unwrap();
    assert!(f_raw < f_norm, "raw {f_raw} vs normalized {f_norm}");

    let sweep = dir.path().join("sweep.csv");
    let det = norm.join("detection.csv");
    let labels = data.join("labels.csv");
    ok(&[
        "sweep", "--param", "k", "--values", "0.1,0.01,0.001,0.0001", "--detection", s(&det), "--labels", s(&labels),
        "--out", s(&sweep),
    ]);
    let text = std::fs::read_to_string(&sweep).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "ptapr_f1").unwrap();
    let f1: Vec<f64> = lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(f1.len(), 4);
    assert!(f1.windows(2).all(|w| w[1] >= w[0]), "{f1:?}");
}

#[test]
fn directory_evaluation_writes_macro_average() {
    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("dets");
    let labs = dir.path().join("labels");
    std::fs::create_dir_all(&dets).unwrap();
    std::fs::create_dir_all(&labs).unwrap();
    let entities = [("m1", [0, 1, 1, 1, 0, 0, 0, 0], [0, 0, 1, 1, 0, 0, 0, 0]), ("m2", [0, 0, 0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 1, 0, 0])];
    for (name, flags, labels) in entities {
        let mut d = String::from("timestamp,flag\n");
        let mut l = String::from("timestamp,label\n");
        for t in 0..8 {
            d.push_str(&format!("{t},{}\n", flags[t]));
            l.push_str(&format!("{t},{}\n", labels[t]));
        }
        std::fs::write(dets.join(format!("{name}.csv")), d).unwrap();
        std::fs::write(labs.join(format!("{name}.csv")), l).unwrap();
    }
    let out = dir.path().join("out");
    ok(&["evaluate", "--detection", s(&dets), "--labels", s(&labs), "--delta", "2", "--out", s(&out)]);
    let m = json(&out.join("macro.json"));
    assert_eq!(m["n_entities"], 2);
    let r1 = json(&out.join("m1/report.json"))["ptapr_f1"].as_f64().unwrap();
    let r2 = json(&out.join("m2/report.json"))["ptapr_f1"].as_f64().unwrap();
    assert!((m["ptapr_f1"].as_f64().unwrap() - (r1 + r2) / 2.0).abs() < 1e-12);
}

#[test]
fn one_based_timestamps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = SynthConfig {
        length: 300,
        train_length: 300,
        anomalies: Vec::new(),
        ..SynthConfig::default()
    };
    let cfg_path = dir.path().join("c.json");
    write_json(&cfg_path, &cfg).unwrap();
    ok(&["--index-base", "1", "synth", "--config", s(&cfg_path), "--out", s(&data)]);
    let test = std::fs::read_to_string(data.join("test.csv")).unwrap();
    assert!(test.lines().nth(1).unwrap().starts_with("1,"));
    let split = dir.path().join("split");
    ok(&["--index-base", "1", "split", s(&data.join("test.csv")), "--out", s(&split)]);
    let valid = std::fs::read_to_string(split.join("valid.csv")).unwrap();
    assert!(valid.lines().nth(1).unwrap().starts_with("211,"));
}
