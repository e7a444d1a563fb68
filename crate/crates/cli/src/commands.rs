use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use poakit::detect::{
    apply_threshold, best_f1_threshold, default_grid, split_precursor_prediction, Detection, DetectMetric,
};
use poakit::forecast::{read_forecast_records, write_forecast_records, Criterion, ForecasterSpec, WindowConfig};
use poakit::io::{
    chronological_split, format_float, macro_average, read_detection, read_json, read_labels_csv, read_scores,
    read_series_csv, sha256_file, write_detection, write_json, write_labels_csv, write_report, write_scores,
    write_series_csv, write_table, write_theta_curve, write_timeline, DetectionMeta, GridInfo, RunManifest,
};
use poakit::metrics::{even_grid, evaluate, MetricParams, MetricReport, MetricSelection};
use poakit::pipeline::{self, PipelineConfig};
use poakit::synth::{self, SynthConfig};
use poakit::uncertainty::{horizon_stats, Collation, HorizonStats, UncertaintyTensor, VariableAggregation};
use poakit::{Error, LabelSequence, Result};
use serde_json::json;

use crate::{
    Cli, Command, DetectArgs, EvaluateArgs, ForecastArgs, ReportArgs, RunArgs, ScoreArgs, SplitArgs,
    SweepArgs, SynthArgs,
};

pub const SEED_ENV: &str = "POAKIT_SEED";

pub fn dispatch(cli: &Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot size thread pool: {e}")))?;
    }
    let base = cli.index_base;
    match &cli.command {
        Command::Synth(a) => synth_cmd(a, base),
        Command::Split(a) => split_cmd(a, base),
        Command::Forecast(a) => forecast_cmd(a, base),
        Command::Score(a) => score_cmd(a, base),
        Command::Detect(a) => detect_cmd(a, base),
        Command::Evaluate(a) => evaluate_cmd(a, base),
        Command::Sweep(a) => sweep_cmd(a, base),
        Command::Report(a) => report_cmd(a, base),
        Command::Run(a) => run_cmd(a, base),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => mkdir(p),
        _ => Ok(()),
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn synth_cmd(a: &SynthArgs, base: i64) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed.or(seed_from_env()?) {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let data = synth::generate(&cfg)?;
    synth::write_dataset(&a.out, &cfg, &data)?;
    if base != 0 {
        // rewrite the timestamped files in the requested base
        write_series_csv(a.out.join("train.csv"), &data.train, base)?;
        write_series_csv(a.out.join("test.csv"), &data.test, base)?;
        write_labels_csv(a.out.join("labels.csv"), &data.labels, 0, base)?;
        let mut manifest = RunManifest::new("synth", Some(cfg.seed), serde_json::to_value(&cfg)?);
        for name in ["train.csv", "test.csv", "labels.csv", "precursors.csv", "config.json"] {
            manifest.add_file(a.out.join(name))?;
        }
        write_json(a.out.join("manifest.json"), &manifest)?;
    }
    info!(
        "synth: seed {}, {} train rows, {} test rows, {} anomalies",
        cfg.seed,
        data.train.len(),
        data.test.len(),
        cfg.anomalies.len()
    );
    Ok(())
}

fn split_cmd(a: &SplitArgs, base: i64) -> Result<()> {
    let series = read_series_csv(&a.series, base)?;
    let (train, valid) = chronological_split(&series, a.train_frac)?;
    mkdir(&a.out)?;
    write_series_csv(a.out.join("train.csv"), &train, base)?;
    write_series_csv(a.out.join("valid.csv"), &valid, base)?;
    info!("split: {} train rows, {} validation rows", train.len(), valid.len());
    Ok(())
}

/// Splits on commas outside parentheses.
fn parse_members(text: &str) -> Result<Vec<ForecasterSpec>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(text[start..i].parse()?);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::invalid(format!("unbalanced parentheses in members '{text}'")));
    }
    if !text[start..].trim().is_empty() {
        out.push(text[start..].parse()?);
    }
    if out.is_empty() {
        return Err(Error::invalid("member list is empty"));
    }
    Ok(out)
}

fn forecast_cmd(a: &ForecastArgs, base: i64) -> Result<()> {
    let ext = match a.format.as_str() {
        "csv" => "csv",
        "ndjson" => "ndjson",
        other => return Err(Error::invalid(format!("unknown forecast format '{other}' (csv|ndjson)"))),
    };
    let cfg = PipelineConfig {
        window: WindowConfig::new(a.window.input_len, a.window.horizon, a.window.stride)?,
        members: match &a.members {
            Some(m) => parse_members(m)?,
            None => ForecasterSpec::default_members(),
        },
        top_k: a.top_k,
        criterion: Criterion::from_str(&a.criterion)?,
        train_frac: a.train_frac,
        standardize: a.standardize,
        ..PipelineConfig::default()
    };
    let train = read_series_csv(&a.train, base)?;
    let test = read_series_csv(&a.test, base)?;
    let fitted = match &a.valid {
        Some(v) => pipeline::fit_and_select_on(&train, &read_series_csv(v, base)?, &cfg)?,
        None => pipeline::fit_and_select(&train, &cfg)?,
    };
    info!("forecast: selected {}", fitted.selected.join(", "));
    let test_fc = pipeline::forecast_test(&fitted.ensemble, &test, &cfg.window)?;

    mkdir(&a.out)?;
    let board = a.out.join("scoreboard.csv");
    let mut text = String::from("member_id,mse,mae,selected\n");
    for s in &fitted.scores {
        text.push_str(&format!(
            "{},{},{},{}\n",
            s.member_id,
            format_float(s.mse),
            format_float(s.mae),
            u8::from(fitted.selected.contains(&s.member_id))
        ));
    }
    std::fs::write(&board, text).map_err(|e| Error::io(&board, e))?;
    let valid_path = a.out.join(format!("valid_forecasts.{ext}"));
    let test_path = a.out.join(format!("test_forecasts.{ext}"));
    write_forecast_records(&valid_path, &fitted.validation)?;
    write_forecast_records(&test_path, &test_fc)?;

    let config = json!({
        "window": cfg.window,
        "members": cfg.members.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "top_k": cfg.top_k,
        "criterion": cfg.criterion,
        "train_frac": cfg.train_frac,
        "standardize": cfg.standardize,
        "selected": fitted.selected,
        "test_length": test.len(),
        "test_first_timestamp": test.first_timestamp(),
    });
    let mut manifest = RunManifest::new("forecast", None, config);
    for p in [&board, &valid_path, &test_path] {
        manifest.add_file(p)?;
    }
    write_json(a.out.join("manifest.json"), &manifest)
}

fn score_cmd(a: &ScoreArgs, _base: i64) -> Result<()> {
    let test_fc = read_forecast_records(&a.forecasts)?;
    let stats: HorizonStats = match (&a.valid_forecasts, &a.valid_stats) {
        (Some(v), None) => horizon_stats(&UncertaintyTensor::from_forecasts(&read_forecast_records(v)?)?)?,
        (None, Some(s)) => read_json(s)?,
        _ if a.no_normalize => HorizonStats {
            mu: Vec::new(),
            sigma: Vec::new(),
            n_windows: 0,
        },
        _ => {
            return Err(Error::invalid(
                "normalization needs --valid-forecasts or --valid-stats (or pass --no-normalize)",
            ))
        }
    };
    let len = match a.length {
        Some(n) => n,
        None => {
            let last = test_fc.iter().map(|f| f.origin).max().unwrap_or(0);
            if test_fc.len() > 1 && test_fc[1].origin - test_fc[0].origin > 1 {
                warn!("score: stride > 1, timeline length inferred as last origin + 1; pass --length to override");
            }
            last + 1
        }
    };
    let cfg = PipelineConfig {
        normalize: !a.no_normalize,
        eps_sigma: a.eps_sigma,
        aggregation: VariableAggregation::from_str(&a.agg)?,
        collation: Collation::from_str(&a.collate)?,
        ..PipelineConfig::default()
    };
    let scoring = pipeline::score_with_stats(stats, &test_fc, len, &cfg)?;
    parent_dir(&a.out)?;
    write_scores(&a.out, &scoring.scores, a.first_timestamp)?;
    if cfg.normalize {
        write_json(a.out.with_file_name("horizon_stats.json"), &scoring.stats)?;
    }
    let missing = scoring.scores.scores().iter().filter(|s| s.is_none()).count();
    info!("score: {len} timestamps, {missing} without a score");
    Ok(())
}

fn aligned_labels(scores_first: i64, n: usize, labels_path: &Path, base: i64) -> Result<LabelSequence> {
    let (first, labels) = read_labels_csv(labels_path, base)?;
    if first != scores_first || labels.len() != n {
        return Err(Error::invalid(format!(
            "labels cover {} rows from timestamp {}, but the other input covers {} rows from {}",
            labels.len(),
            first + base,
            n,
            scores_first + base
        )));
    }
    Ok(labels)
}

fn detect_cmd(a: &DetectArgs, base: i64) -> Result<()> {
    let params = a.metrics.params()?;
    let thetas = even_grid(a.metrics.theta_grid);
    let metric = DetectMetric::from_str(&a.metric)?;
    let (first, scores) = read_scores(&a.scores)?;
    let (tune_scores, tune_labels) = match (&a.tune_scores, &a.tune_labels) {
        (Some(s), Some(l)) => {
            let (f, ts) = read_scores(s)?;
            let tl = aligned_labels(f, ts.len(), l, base)?;
            (ts, tl)
        }
        _ => {
            let labels = aligned_labels(first, scores.len(), &a.labels, base)?;
            (scores.clone(), labels)
        }
    };
    let grid = default_grid(&tune_scores, a.grid_n)?;
    let search = best_f1_threshold(&tune_scores, &tune_labels, &grid, |d, l| {
        metric.score(d, l, &params, &thetas)
    })?;
    if search.all_undefined {
        warn!("detect: objective undefined for every candidate; using the largest threshold");
    }
    let detection = apply_threshold(&scores, search.threshold)?;
    let meta = DetectionMeta {
        threshold: search.threshold,
        metric: metric.to_string(),
        objective: search.f1,
        grid: GridInfo {
            kind: "quantile".into(),
            requested: a.grid_n,
            candidates: grid.len(),
        },
        all_undefined: search.all_undefined,
    };
    parent_dir(&a.out)?;
    write_detection(&a.out, &detection, first, Some(&meta))?;
    info!(
        "detect: threshold {} ({} = {}), {} of {} flagged",
        format_float(search.threshold),
        metric,
        format_float(search.f1),
        detection.n_flagged(),
        detection.len()
    );
    Ok(())
}

/// Evaluates one detection file against one label file.
pub fn evaluate_files(
    detection: &Path,
    labels: &Path,
    params: &MetricParams,
    thetas: &[f64],
    selection: MetricSelection,
    base: i64,
) -> Result<MetricReport> {
    let (first, det) = read_detection(detection)?;
    let labels = aligned_labels(first, det.len(), labels, base)?;
    evaluate_detection(&det, &labels, params, thetas, selection)
}

fn evaluate_detection(
    det: &Detection,
    labels: &LabelSequence,
    params: &MetricParams,
    thetas: &[f64],
    selection: MetricSelection,
) -> Result<MetricReport> {
    let anomalies = labels.segments();
    if anomalies.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let set = split_precursor_prediction(det.flags(), &anomalies, params.delta)?;
    evaluate(&set, params, thetas, selection)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs, base: i64) -> Result<()> {
    let params = a.params.params()?;
    let thetas = even_grid(a.params.theta_grid);
    let selection = MetricSelection::from_str(&a.metrics)?;
    if !a.detection.is_dir() {
        let report = evaluate_files(&a.detection, &a.labels, &params, &thetas, selection, base)?;
        parent_dir(&a.out)?;
        write_report(&a.out, &report)?;
        info!(
            "evaluate: PTaR {} PTaP {} F1 {}",
            format_float(report.ptar),
            format_float(report.ptap),
            format_float(report.ptapr_f1)
        );
        return Ok(());
    }
    if !a.labels.is_dir() {
        return Err(Error::invalid("--detection is a directory, so --labels must be one too"));
    }
    mkdir(&a.out)?;
    let mut reports = Vec::new();
    for det_path in csv_files(&a.detection)? {
        let name = det_path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let label_path = a.labels.join(det_path.file_name().unwrap_or_default());
        if !label_path.exists() {
            return Err(Error::invalid(format!("no labels for entity '{name}' in {}", a.labels.display())));
        }
        let report = evaluate_files(&det_path, &label_path, &params, &thetas, selection, base)?;
        let entity_dir = a.out.join(&name);
        mkdir(&entity_dir)?;
        write_report(entity_dir.join("report.json"), &report)?;
        reports.push((name, report));
    }
    let summary = macro_average(&reports)?;
    write_json(a.out.join("macro.json"), &summary)?;
    info!("evaluate: {} entities, macro F1 {}", summary.n_entities, format_float(summary.ptapr_f1));
    Ok(())
}

fn sweep_cmd(a: &SweepArgs, base: i64) -> Result<()> {
    let base_params = a.params.params()?;
    let thetas = even_grid(a.params.theta_grid);
    let (first, det) = read_detection(&a.detection)?;
    let labels = aligned_labels(first, det.len(), &a.labels, base)?;
    let selection = MetricSelection { tapr: false, pak: false };
    let mut rows = Vec::with_capacity(a.values.len());
    for &v in &a.values {
        let mut params = base_params;
        match a.param.as_str() {
            "k" => params.k = v,
            _ => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::invalid(format!("epsilon must be a non-negative integer, got {v}")));
                }
                params.epsilon = v as usize;
            }
        }
        params.validate()?;
        let r = evaluate_detection(&det, &labels, &params, &thetas, selection)?;
        rows.push(vec![
            v,
            r.ptar,
            r.ptap,
            r.ptapr_f1,
            r.f1_0,
            r.f1_1,
            r.auc,
            r.early_detection.recall,
            r.early_detection.precision,
        ]);
    }
    parent_dir(&a.out)?;
    let header = [
        a.param.as_str(),
        "ptar",
        "ptap",
        "ptapr_f1",
        "f1_0",
        "f1_1",
        "auc",
        "early_recall",
        "early_precision",
    ];
    write_table(&a.out, &header, &rows)
}

/// Consolidates `report.json`, `scores.csv`, `labels.csv` and
/// `detection.csv` found in a run directory.
fn report_cmd(a: &ReportArgs, base: i64) -> Result<()> {
    let dir = &a.run_dir;
    let report_path = dir.join("report.json");
    let report: serde_json::Value = read_json(&report_path)?;
    let mut summary = json!({
        "ptar": report["ptar"],
        "ptap": report["ptap"],
        "ptapr_f1": report["ptapr_f1"],
        "f1_0": report["f1_0"],
        "f1_1": report["f1_1"],
        "auc": report["auc"],
        "early_detection": report["early_detection"],
        "params": report["params"],
    });
    if let Some(t) = report.get("tapr") {
        summary["tapr"] = json!({ "score": t["score"], "auc": t["auc"] });
    }
    if let Some(p) = report.get("pak") {
        summary["pak"] = json!({ "f1_pa": p["f1_pa"], "f1": p["f1"], "auc": p["auc"] });
    }
    let meta_path = poakit::io::sidecar_path(&dir.join("detection.csv"));
    if meta_path.exists() {
        summary["detection"] = read_json::<serde_json::Value>(&meta_path)?;
    }
    let mut files = serde_json::Map::new();
    for name in ["report.json", "scores.csv", "labels.csv", "detection.csv"] {
        let p = dir.join(name);
        if p.exists() {
            files.insert(name.into(), sha256_file(&p)?.into());
        }
    }
    summary["files"] = files.into();
    write_json(dir.join("summary.json"), &summary)?;

    let scores_path = dir.join("scores.csv");
    let labels_path = dir.join("labels.csv");
    if scores_path.exists() && labels_path.exists() {
        let (first, scores) = read_scores(&scores_path)?;
        let labels = aligned_labels(first, scores.len(), &labels_path, base)?;
        let det_path = dir.join("detection.csv");
        let det = if det_path.exists() {
            let (df, d) = read_detection(&det_path)?;
            if df != first || d.len() != scores.len() {
                return Err(Error::invalid("detection and scores cover different timestamps"));
            }
            Some(d)
        } else {
            None
        };
        write_timeline(dir.join("timeline.csv"), first, &scores, &labels, det.as_ref())?;
    } else {
        warn!("report: scores.csv or labels.csv missing, timeline skipped");
    }
    let curve = serde_json::from_value(report["theta_curve"].clone())?;
    write_theta_curve(dir.join("theta_curve.csv"), &curve)
}

fn run_cmd(a: &RunArgs, base: i64) -> Result<()> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if a.no_normalize {
        cfg.normalize = false;
    }
    let train = read_series_csv(a.data.join("train.csv"), base)?;
    let test = read_series_csv(a.data.join("test.csv"), base)?;
    let labels = aligned_labels(test.first_timestamp(), test.len(), &a.data.join("labels.csv"), base)?;
    let run = pipeline::run(&train, &test, &labels, &cfg)?;
    info!("run: selected {}", run.fitted.selected.join(", "));

    let out = &a.out;
    mkdir(out)?;
    let first = test.first_timestamp();
    let scores_path = out.join("scores.csv");
    let labels_path = out.join("labels.csv");
    let det_path = out.join("detection.csv");
    let report_path = out.join("report.json");
    write_scores(&scores_path, &run.scoring.scores, first)?;
    write_labels_csv(&labels_path, &labels, first, base)?;
    let meta = DetectionMeta {
        threshold: run.search.threshold,
        metric: cfg.detect_metric.to_string(),
        objective: run.search.f1,
        grid: GridInfo {
            kind: "quantile".into(),
            requested: cfg.grid_n,
            candidates: run.search.evaluated.len(),
        },
        all_undefined: run.search.all_undefined,
    };
    write_detection(&det_path, &run.detection, first, Some(&meta))?;
    if cfg.normalize {
        write_json(out.join("horizon_stats.json"), &run.scoring.stats)?;
    }
    let params = cfg.metric_params();
    let report = evaluate_detection(
        &run.detection,
        &labels,
        &params,
        &cfg.theta_grid(),
        MetricSelection::default(),
    )?;
    write_report(&report_path, &report)?;
    let mut files = vec![scores_path, labels_path, det_path, report_path];
    if a.keep_forecasts {
        let v = out.join("valid_forecasts.csv");
        let t = out.join("test_forecasts.csv");
        write_forecast_records(&v, &run.fitted.validation)?;
        write_forecast_records(&t, &run.test_forecasts)?;
        files.extend([v, t]);
    }
    let mut manifest = RunManifest::new("run", None, serde_json::to_value(&cfg)?);
    for f in &files {
        manifest.add_file(f)?;
    }
    write_json(out.join("manifest.json"), &manifest)?;
    report_cmd(&ReportArgs { run_dir: out.clone() }, base)?;
    info!(
        "run: PTaR {} PTaP {} F1 {} AUC {}",
        format_float(report.ptar),
        format_float(report.ptap),
        format_float(report.ptapr_f1),
        format_float(report.auc)
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::MetricArgs;

    #[test]
    fn members_split_outside_parentheses() {
        let m = parse_members("persistence, ar_ols(3),holt_linear(0.5,0.1)").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[2].to_string(), "holt_linear(0.5,0.1)");
        assert!(parse_members("ar_ols(3").is_err());
        assert!(parse_members("").is_err());
    }

    #[test]
    fn metric_args_reject_unknown_early_point() {
        let args = MetricArgs {
            theta: 0.5,
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
            epsilon: 7,
            k: 0.001,
            delta: 24,
            tapr_alpha: 0.5,
            early_point: "latest".into(),
            theta_grid: 101,
        };
        assert!(args.params().is_err());
    }
}
