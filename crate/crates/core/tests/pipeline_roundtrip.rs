use poakit::forecast::{read_forecast_records, write_forecast_records, WindowConfig};
use poakit::io::{read_detection, read_labels_csv, read_scores, read_series_csv, write_detection, write_scores};
use poakit::pipeline::{self, PipelineConfig};
use poakit::synth::{self, read_segments_csv, SynthConfig};

fn small() -> (SynthConfig, PipelineConfig) {
    let synth_cfg = SynthConfig {
        length: 1200,
        train_length: 900,
        anomalies: SynthConfig::default().anomalies.into_iter().take(1).collect(),
        ..SynthConfig::default()
    };
    let cfg = PipelineConfig {
        window: WindowConfig::new(60, 12, 1).unwrap(),
        ..PipelineConfig::default()
    };
    (synth_cfg, cfg)
}

#[test]
fn pipeline_is_deterministic() {
    let (synth_cfg, cfg) = small();
    let data = synth::generate(&synth_cfg).unwrap();
    let a = pipeline::run(&data.train, &data.test, &data.labels, &cfg).unwrap();
    let b = pipeline::run(&data.train, &data.test, &data.labels, &cfg).unwrap();
    assert_eq!(a.fitted.selected, b.fitted.selected);
    assert_eq!(a.scoring.scores, b.scoring.scores);
    assert_eq!(a.detection.flags(), b.detection.flags());
    assert_eq!(a.search.threshold, b.search.threshold);
}

#[test]
fn dataset_and_stage_files_round_trip() {
    let (synth_cfg, cfg) = small();
    let data = synth::generate(&synth_cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    synth::write_dataset(dir.path(), &synth_cfg, &data).unwrap();

    let test = read_series_csv(dir.path().join("test.csv"), 0).unwrap();
    assert_eq!(test.len(), data.test.len());
    for (x, y) in test.values().iter().zip(data.test.values().iter()) {
        assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0));
    }
    let (first, labels) = read_labels_csv(dir.path().join("labels.csv"), 0).unwrap();
    assert_eq!(first, 0);
    assert_eq!(labels, data.labels);
    assert_eq!(read_segments_csv(dir.path().join("precursors.csv")).unwrap(), data.precursors);

    let run = pipeline::run(&data.train, &data.test, &data.labels, &cfg).unwrap();
    for ext in ["csv", "ndjson"] {
        let path = dir.path().join(format!("valid.{ext}"));
        write_forecast_records(&path, &run.fitted.validation).unwrap();
        let back = read_forecast_records(&path).unwrap();
        assert_eq!(back.len(), run.fitted.validation.len());
        assert_eq!(back[3].origin, run.fitted.validation[3].origin);
        assert_eq!(back[3].member_ids.len(), cfg.top_k);
    }

    let scores_path = dir.path().join("scores.csv");
    write_scores(&scores_path, &run.scoring.scores, 0).unwrap();
    let (_, scores) = read_scores(&scores_path).unwrap();
    assert_eq!(scores.lead_times(), run.scoring.scores.lead_times());

    let det_path = dir.path().join("detection.csv");
    write_detection(&det_path, &run.detection, 0, None).unwrap();
    let (_, det) = read_detection(&det_path).unwrap();
    assert_eq!(det.flags(), run.detection.flags());
    assert!(det.threshold().is_nan());
}
