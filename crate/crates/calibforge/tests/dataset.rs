use std::path::Path;

use calibforge::commands::{self, MANIFEST_FILE};
use calibforge::config::PipelineConfig;
use calibforge::formats::{read_json, read_jsonl, write_jsonl, DatasetJson, FrameRecord, ManifestRecord, PosePairJson};
use calibforge::image_io::{read_pfm, read_ppm};

/// Reduced resolution keeps a full 3000-frame export at a few tens of megabytes.
fn export_config(n_frames: usize) -> PipelineConfig {
    PipelineConfig {
        n_frames,
        image_width: 66,
        image_height: 53,
        focal_length: 45.625,
        crop_margin_u: 4,
        crop_margin_v: 3,
        ..PipelineConfig::default()
    }
}

fn export(dir: &Path, cfg: &PipelineConfig) -> commands::LabelSummary {
    let sim = dir.join("sim");
    commands::simulate(cfg, &sim).unwrap();
    let calib = dir.join("calib.json");
    commands::calibrate(&sim.join("pose_pairs.json"), 40, cfg.seed, 1.0, Some(&calib)).unwrap();
    commands::label(&sim, &sim.join("annotation.json"), &calib, &dir.join("data"), cfg.crop_margin()).unwrap()
}

#[test]
fn three_thousand_frame_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = export_config(3000);
    let summary = export(dir.path(), &cfg);
    assert_eq!(summary.n_frames, 3000);

    let data = dir.path().join("data");
    let records: Vec<ManifestRecord> = read_jsonl(&data.join(MANIFEST_FILE)).unwrap();
    assert_eq!(records.len(), 3000);
    let ds: DatasetJson = read_json(&data.join("dataset.json")).unwrap();
    assert_eq!((ds.n_frames, ds.n_points), (3000, 8));
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.frame, i);
        assert_eq!((r.labels2d.len(), r.labels3d.len(), r.visible.len()), (8, 8, 8));
        for [u, v] in &r.labels2d {
            assert!(*u >= 0 && *v >= 0 && (*u as usize) < ds.crop.width && (*v as usize) < ds.crop.height);
        }
    }
    // Spot-check that the referenced crops exist with the recorded size.
    for r in records.iter().step_by(997) {
        let rgb = read_ppm(&data.join(&r.rgb)).unwrap();
        let depth = read_pfm(&data.join(&r.depth)).unwrap();
        assert_eq!((rgb.width(), rgb.height()), (ds.crop.width, ds.crop.height));
        assert_eq!((depth.width(), depth.height()), (ds.crop.width, ds.crop.height));
    }
}

#[test]
fn manifest_and_logs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), &export_config(30));
    let path = dir.path().join("data").join(MANIFEST_FILE);
    let records: Vec<ManifestRecord> = read_jsonl(&path).unwrap();
    let copy = dir.path().join("copy.jsonl");
    write_jsonl(&copy, &records).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&copy).unwrap());
    assert_eq!(read_jsonl::<ManifestRecord>(&copy).unwrap(), records);

    let frames: Vec<FrameRecord> = read_jsonl(&dir.path().join("sim/frames.jsonl")).unwrap();
    assert_eq!(frames.len(), 30);
    let pairs: Vec<PosePairJson> = read_json(&dir.path().join("sim/pose_pairs.json")).unwrap();
    assert_eq!(pairs.len(), 50);
}

#[test]
fn manifest_poses_are_validated_on_read() {
    let dir = tempfile::tempdir().unwrap();
    export(dir.path(), &export_config(12));
    let sim = dir.path().join("sim");
    let log = sim.join("frames.jsonl");
    let mut frames: Vec<FrameRecord> = read_jsonl(&log).unwrap();
    frames[3].ef_pose.r[0] += 1e-3;
    write_jsonl(&log, &frames).unwrap();
    let err = commands::label(&sim, &sim.join("annotation.json"), &dir.path().join("calib.json"), &dir.path().join("d2"), Default::default())
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("frames.jsonl"), "{err}");
}
