//! Subcommand implementations. Each takes its inputs explicitly and returns a
//! serializable summary that the binary prints as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use calibforge_core::calibration::{self, forward_pairs, solve_qr24_with, split_pairs, Qr24Options};
use calibforge_core::camera::{CropRect, DepthImage, RgbImage, RgbdFrame};
use calibforge_core::geometry::perturb_with;
use calibforge_core::labeling::{annotate_reference, compute_crop, label_frame, lift_to_endeffector, CropMargin, LabeledFrame, ReferenceAnnotation};
use calibforge_core::metrics::{self, MaeConvention};
use calibforge_core::phantom::{best_reference_pose, render, sample_poses, sample_poses_with, simulated_clicks};
use calibforge_core::regressor::{self, prepare_input, Channels, Model, ModelConfig, Sample, TrainConfig, TrainedModel};
use calibforge_core::rng;
use log::info;
use serde::Serialize;

use crate::config::{simulated_marker_in_endeffector, stage_seed, LabelKind, PipelineConfig};
use crate::error::{CliError, Result};
use crate::formats::*;
use crate::image_io::{read_pfm, read_ppm, write_pfm, write_ppm};
use crate::model_io;

pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.jsonl";
pub const POSE_PAIRS_FILE: &str = "pose_pairs.json";
pub const ANNOTATION_FILE: &str = "annotation.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_FILE: &str = "dataset.json";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::write(path, e))
}

fn frame_stem(i: usize) -> String {
    format!("{i:06}")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub n_frames: usize,
    pub n_pose_pairs: usize,
    pub reference_frame: usize,
    pub visible_fraction: f64,
}

/// Renders the acquisition, the calibration pose pairs and the reference annotation into `out`.
pub fn simulate(cfg: &PipelineConfig, out: &Path) -> Result<SimulateSummary> {
    cfg.validate()?;
    let phantom = cfg.phantom()?;
    let intr = cfg.intrinsics()?;
    let acq = cfg.acquisition();
    let frames_dir = out.join("frames");
    create_dir(&frames_dir)?;

    let poses = sample_poses(&acq);
    let reference = match cfg.reference_frame {
        Some(r) => r,
        None => best_reference_pose(&phantom, &poses, &acq.camera_in_robot).expect("at least one frame"),
    };

    let mut frames = Vec::with_capacity(poses.len());
    let mut truth = Vec::with_capacity(poses.len());
    let mut clicks = Vec::new();
    let (mut visible, mut total) = (0usize, 0usize);
    for (i, pose) in poses.iter().enumerate() {
        let gt = render(&phantom, pose, &acq, &intr, i as u64);
        let stem = frame_stem(i);
        let rgb = format!("frames/{stem}.ppm");
        let depth = format!("frames/{stem}.pfm");
        write_ppm(&out.join(&rgb), &gt.frame.rgb)?;
        write_pfm(&out.join(&depth), &gt.frame.depth)?;
        if i == reference {
            clicks = simulated_clicks(&gt, cfg.click_noise_px, stage_seed(cfg.seed, "clicks"));
        }
        visible += gt.visibility.iter().filter(|v| **v).count();
        total += gt.visibility.len();
        frames.push(FrameRecord { frame: i, rgb, depth, ef_pose: pose.into() });
        truth.push(GroundTruthRecord {
            frame: i,
            ef_pose: pose.into(),
            positions: gt.electrode_positions_camera.iter().map(|p| [p.x, p.y, p.z]).collect(),
            pixels: gt.electrode_pixels.clone(),
            visible: gt.visibility.clone(),
        });
        if (i + 1) % 500 == 0 {
            info!("rendered {} of {} frames", i + 1, poses.len());
        }
    }

    let x = simulated_marker_in_endeffector();
    let mut pose_rng = rng::seeded(stage_seed(cfg.seed, "calibration-poses"));
    let robot = sample_poses_with(&acq, cfg.n_pose_pairs, &mut pose_rng);
    let noise = cfg.marker_noise()?;
    let mut noise_rng = rng::seeded(stage_seed(cfg.seed, "marker-noise"));
    let pairs: Vec<PosePairJson> = forward_pairs(&robot, &x, &acq.camera_in_robot)
        .iter()
        .map(|p| PosePairJson { robot: (&p.robot).into(), marker: (&perturb_with(&p.marker, &noise, &mut noise_rng)).into() })
        .collect();

    write_json(&out.join(INTRINSICS_FILE), &IntrinsicsJson::from(&intr))?;
    write_jsonl(&out.join(FRAMES_FILE), &frames)?;
    write_jsonl(&out.join(GROUND_TRUTH_FILE), &truth)?;
    write_json(&out.join(POSE_PAIRS_FILE), &pairs)?;
    write_json(&out.join(ANNOTATION_FILE), &AnnotationJson { frame_index: reference, clicks })?;
    write_json(
        &out.join(TRUTH_FILE),
        &TruthJson {
            camera_in_robot: (&acq.camera_in_robot).into(),
            marker_in_endeffector: (&x).into(),
            reference_frame: reference,
        },
    )?;
    info!("simulated {} frames, reference frame {reference}", poses.len());
    Ok(SimulateSummary {
        n_frames: poses.len(),
        n_pose_pairs: pairs.len(),
        reference_frame: reference,
        visible_fraction: visible as f64 / total.max(1) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrateSummary {
    pub n_calibration: usize,
    pub n_evaluation: usize,
    pub residual_rms: f64,
    pub report: CalibrationReportJson,
    pub calibration: CalibrationJson,
}

/// Solves on a seeded subset of the pairs and evaluates on the rest.
pub fn calibrate(pairs_path: &Path, n_calibration: usize, seed: u64, translation_weight: f64, out: Option<&Path>) -> Result<CalibrateSummary> {
    let raw: Vec<PosePairJson> = read_json(pairs_path)?;
    let pairs = pairs_from_json(pairs_path, &raw)?;
    let (cal, eval) = split_pairs(&pairs, n_calibration, stage_seed(seed, "split"))?;
    let sol = solve_qr24_with(&cal, &Qr24Options { translation_weight })?;
    let report = calibration::evaluate(&sol, &eval)?;
    let calibration = CalibrationJson::from(&sol);
    if let Some(out) = out {
        write_json(out, &calibration)?;
    }
    info!(
        "calibration: {:.3} mm, {:.3} deg mean held-out error",
        report.position_error_mean * 1e3,
        report.rotation_error_mean.to_degrees()
    );
    Ok(CalibrateSummary {
        n_calibration: cal.len(),
        n_evaluation: eval.len(),
        residual_rms: sol.residual_rms,
        report: (&report).into(),
        calibration,
    })
}

fn load_frame(dir: &Path, rec: &FrameRecord, intr: &calibforge_core::camera::Intrinsics) -> Result<RgbdFrame> {
    let ef = pose_from_json(&dir.join(FRAMES_FILE), &rec.ef_pose)?;
    let rgb_path = dir.join(&rec.rgb);
    let depth_path = dir.join(&rec.depth);
    let rgb = read_ppm(&rgb_path)?;
    let depth = read_pfm(&depth_path)?;
    RgbdFrame::new(rgb, depth, *intr, ef).map_err(|e| CliError::format(&depth_path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelSummary {
    pub n_frames: usize,
    pub n_points: usize,
    pub reference_frame: usize,
    pub crop: CropJson,
    pub visible_fraction: f64,
}

/// Labels every frame from the single reference annotation and writes a cropped dataset.
pub fn label(frames_dir: &Path, annotation_path: &Path, calibration_path: &Path, out: &Path, margin: CropMargin) -> Result<LabelSummary> {
    let intr_path = frames_dir.join(INTRINSICS_FILE);
    let intr = read_json::<IntrinsicsJson>(&intr_path)?.to_intrinsics().map_err(|e| CliError::format(&intr_path, e))?;
    let records: Vec<FrameRecord> = read_jsonl(&frames_dir.join(FRAMES_FILE))?;
    if records.is_empty() {
        return Err(CliError::format(&frames_dir.join(FRAMES_FILE), "no frames"));
    }
    let ann: AnnotationJson = read_json(annotation_path)?;
    let calib: CalibrationJson = read_json(calibration_path)?;
    let y = pose_from_json(calibration_path, &calib.y)?;

    let reference = records
        .iter()
        .find(|r| r.frame == ann.frame_index)
        .ok_or_else(|| CliError::format(annotation_path, format!("frame {} is not in the robot log", ann.frame_index)))?;
    let ref_frame = load_frame(frames_dir, reference, &intr)?;
    let clicked = annotate_reference(&ref_frame, &ReferenceAnnotation { frame_index: ann.frame_index, clicks: ann.clicks.clone() })
        .map_err(|e| CliError::format(annotation_path, e.to_string()))?;
    let in_ef = lift_to_endeffector(&ref_frame.endeffector_pose, &y, &clicked);

    let mut labeled: Vec<LabeledFrame> = Vec::with_capacity(records.len());
    for rec in &records {
        let ef = pose_from_json(&frames_dir.join(FRAMES_FILE), &rec.ef_pose)?;
        let depth_path = frames_dir.join(&rec.depth);
        let depth = read_pfm(&depth_path)?;
        // The pixel labels only need depth; color is read again when cropping.
        let frame = RgbdFrame::new(RgbImage::black(depth.width(), depth.height()), depth, intr, ef)
            .map_err(|e| CliError::format(&depth_path, e.to_string()))?;
        labeled.push(label_frame(rec.frame, &frame, &in_ef, &y, None).map_err(|e| CliError::format(&depth_path, e.to_string()))?);
    }
    let crop = compute_crop(labeled.iter().flat_map(|l| l.pixels_2d.iter()), margin, intr.width, intr.height)?;

    let images = out.join("images");
    create_dir(&images)?;
    let mut manifest = Vec::with_capacity(records.len());
    let (mut visible, mut total) = (0usize, 0usize);
    for (rec, lab) in records.iter().zip(&labeled) {
        let frame = load_frame(frames_dir, rec, &intr)?;
        let stem = frame_stem(rec.frame);
        let rgb = format!("images/{stem}.ppm");
        let depth = format!("images/{stem}.pfm");
        write_ppm(&out.join(&rgb), &frame.rgb.crop(&crop))?;
        write_pfm(&out.join(&depth), &frame.depth.crop(&crop))?;
        visible += lab.visibility.iter().filter(|v| **v).count();
        total += lab.visibility.len();
        manifest.push(ManifestRecord {
            frame: rec.frame,
            rgb,
            depth,
            ef_pose: rec.ef_pose,
            labels3d: lab.positions_3d.iter().map(|p| [p.x, p.y, p.z]).collect(),
            labels2d: lab.pixels_2d.iter().map(|[u, v]| [u - crop.u0 as i64, v - crop.v0 as i64]).collect(),
            visible: lab.visibility.clone(),
        });
    }
    write_jsonl(&out.join(MANIFEST_FILE), &manifest)?;
    let dataset = DatasetJson { crop: (&crop).into(), n_points: clicked.len(), n_frames: manifest.len(), reference_frame: ann.frame_index };
    write_json(&out.join(DATASET_FILE), &dataset)?;
    info!("labeled {} frames, crop {}x{}", manifest.len(), crop.width, crop.height);
    Ok(LabelSummary {
        n_frames: manifest.len(),
        n_points: clicked.len(),
        reference_frame: ann.frame_index,
        crop: dataset.crop,
        visible_fraction: visible as f64 / total.max(1) as f64,
    })
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn targets(rec: &ManifestRecord, labels: LabelKind) -> Vec<f64> {
    match labels {
        LabelKind::TwoD => rec.labels2d.iter().flat_map(|p| [p[0] as f64, p[1] as f64]).collect(),
        LabelKind::ThreeD => rec.labels3d.iter().flatten().copied().collect(),
    }
}

/// Network inputs and physical targets for every manifest record.
pub fn load_samples(manifest: &Path, channels: Channels, labels: LabelKind, input_size: usize) -> Result<(Vec<ManifestRecord>, Vec<Sample>)> {
    let records: Vec<ManifestRecord> = read_jsonl(manifest)?;
    if records.is_empty() {
        return Err(CliError::format(manifest, "empty manifest"));
    }
    let dir = manifest_dir(manifest);
    let n_points = records[0].labels3d.len();
    let mut samples = Vec::with_capacity(records.len());
    for rec in &records {
        if rec.labels3d.len() != n_points || rec.labels2d.len() != n_points {
            return Err(CliError::format(manifest, format!("frame {} has a different point count", rec.frame)));
        }
        let rgb_path = dir.join(&rec.rgb);
        let rgb: RgbImage = read_ppm(&rgb_path)?;
        let depth: DepthImage = read_pfm(&dir.join(&rec.depth))?;
        let input = prepare_input(&rgb, &depth, channels, input_size, input_size).map_err(|e| CliError::format(&rgb_path, e.to_string()))?;
        samples.push(Sample { input, target: targets(rec, labels) });
    }
    Ok((records, samples))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochJson {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmae: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub val_frames: Vec<usize>,
    pub parameters: usize,
    pub best_epoch: usize,
    /// Validation metrics of the saved (f32) model.
    pub validation: RegressionReportJson,
    /// Predicting the training-set mean for every frame.
    pub mean_predictor: RegressionReportJson,
    pub log: Vec<EpochJson>,
}

pub struct TrainRequest<'a> {
    pub manifest: &'a Path,
    pub out: &'a Path,
    pub channels: Channels,
    pub labels: LabelKind,
    pub input_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub train: TrainConfig,
}

/// Seeded split of `0..n` into (train, validation) with at least two validation frames.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = ((n as f64 * val_fraction).round() as usize).max(2);
    if n_val >= n {
        return Err(CliError::Input(format!("{n} frames are too few for a validation split")));
    }
    let indices: Vec<usize> = (0..n).collect();
    let (train, mut val) = split_pairs(&indices, n - n_val, stage_seed(seed, "train-split"))?;
    val.sort_unstable();
    Ok((train, val))
}

pub fn train(req: &TrainRequest) -> Result<TrainSummary> {
    let (records, samples) = load_samples(req.manifest, req.channels, req.labels, req.input_size)?;
    let (train_idx, val_idx) = split_indices(samples.len(), req.val_fraction, req.seed)?;
    let train_set: Vec<Sample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let val_set: Vec<Sample> = val_idx.iter().map(|&i| samples[i].clone()).collect();
    let config = ModelConfig {
        input_width: req.input_size,
        input_height: req.input_size,
        ..ModelConfig::new(req.channels, records[0].labels3d.len(), req.labels.dim())
    };
    let model = Model::init(config, stage_seed(req.seed, "train-init"))?;
    let parameters = model.params().len();
    info!("training {parameters} parameters on {} frames, validating on {}", train_set.len(), val_set.len());
    let outcome = regressor::train(model, &train_set, &val_set, &req.train)?;
    for e in outcome.log.iter().filter(|e| e.epoch % 10 == 0 || e.epoch + 1 == outcome.log.len()) {
        info!("epoch {:>4}  lr {:.2e}  loss {:.5}  val MAE {:.4}  aCC {:.4}", e.epoch, e.lr, e.train_loss, e.val.mae_mean, e.val.acc);
    }
    let mut best = outcome.best;
    model_io::round_params(&mut best);
    model_io::save(req.out, &best)?;
    let validation = best.evaluate(&val_set)?;
    let baseline = regressor::mean_predictor_report(&train_set, &val_set, req.labels.dim())?;
    Ok(TrainSummary {
        n_train: train_set.len(),
        n_val: val_set.len(),
        val_frames: val_idx.iter().map(|&i| records[i].frame).collect(),
        parameters,
        best_epoch: outcome.best_epoch,
        validation: (&validation).into(),
        mean_predictor: (&baseline).into(),
        log: outcome
            .log
            .iter()
            .map(|e| EpochJson {
                epoch: e.epoch,
                lr: e.lr,
                train_loss: e.train_loss,
                val_mae: e.val.mae_mean,
                val_rmae: e.val.rmae,
                val_acc: e.val.acc,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictSummary {
    pub n_frames: usize,
    pub n_points: usize,
    pub label_dim: usize,
}

pub fn predict(model_path: &Path, manifest: &Path, out: &Path) -> Result<PredictSummary> {
    let model: TrainedModel = model_io::load(model_path)?;
    let cfg = model.model.config().clone();
    let labels = if cfg.label_dim == 2 { LabelKind::TwoD } else { LabelKind::ThreeD };
    if cfg.input_width != cfg.input_height {
        return Err(CliError::format(model_path, "only square inputs are supported"));
    }
    let (records, samples) = load_samples(manifest, cfg.channels, labels, cfg.input_width)?;
    if records[0].labels3d.len() != cfg.n_points {
        return Err(CliError::Input(format!(
            "model predicts {} points but the manifest has {}",
            cfg.n_points,
            records[0].labels3d.len()
        )));
    }
    let mut out_records = Vec::with_capacity(samples.len());
    for (rec, s) in records.iter().zip(&samples) {
        let y = model.predict(&s.input)?;
        out_records.push(PredictionRecord { frame: rec.frame, points: y.chunks(cfg.label_dim).map(<[f64]>::to_vec).collect() });
    }
    write_jsonl(out, &out_records)?;
    Ok(PredictSummary { n_frames: out_records.len(), n_points: cfg.n_points, label_dim: cfg.label_dim })
}

/// Points of one JSON-lines record: `points`, or the manifest's `labels2d`/`labels3d`.
fn record_points(path: &Path, value: &serde_json::Value, labels: LabelKind) -> Result<(usize, Vec<f64>)> {
    let frame = value
        .get("frame")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| CliError::format(path, "record without a frame number"))? as usize;
    let key = match labels {
        LabelKind::TwoD => "labels2d",
        LabelKind::ThreeD => "labels3d",
    };
    let points = value
        .get("points")
        .or_else(|| value.get(key))
        .ok_or_else(|| CliError::format(path, format!("frame {frame}: neither \"points\" nor \"{key}\"")))?;
    let rows: Vec<Vec<f64>> =
        serde_json::from_value(points.clone()).map_err(|e| CliError::format(path, format!("frame {frame}: {e}")))?;
    if rows.iter().any(|r| r.len() != labels.dim()) {
        return Err(CliError::format(path, format!("frame {frame}: expected {}-dimensional points", labels.dim())));
    }
    Ok((frame, rows.into_iter().flatten().collect()))
}

fn read_points(path: &Path, labels: LabelKind) -> Result<Vec<(usize, Vec<f64>)>> {
    let values: Vec<serde_json::Value> = read_jsonl(path)?;
    values.iter().map(|v| record_points(path, v, labels)).collect()
}

/// Compares predictions with targets frame by frame.
pub fn eval(pred_path: &Path, target_path: &Path, labels: LabelKind, per_coordinate: bool) -> Result<RegressionReportJson> {
    let preds = read_points(pred_path, labels)?;
    let targets: BTreeMap<usize, Vec<f64>> = read_points(target_path, labels)?.into_iter().collect();
    if preds.len() != targets.len() {
        return Err(CliError::Input(format!("{} predictions but {} targets", preds.len(), targets.len())));
    }
    let mut p_rows = Vec::with_capacity(preds.len());
    let mut t_rows = Vec::with_capacity(preds.len());
    for (frame, p) in preds {
        let t = targets
            .get(&frame)
            .ok_or_else(|| CliError::format(target_path, format!("no target for frame {frame}")))?;
        p_rows.push(p);
        t_rows.push(t.clone());
    }
    let convention = if per_coordinate { MaeConvention::PerCoordinate } else { MaeConvention::Euclidean { point_dim: labels.dim() } };
    let report = metrics::report(&p_rows, &t_rows, convention)?;
    Ok((&report).into())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelQuality {
    /// Generated versus simulated 3D positions, meters.
    pub position: RegressionReportJson,
    /// Generated versus exact pixels of visible electrodes, full-image pixels.
    pub pixel_visible: ErrorStats,
}

/// Scores a labeled dataset against the simulator's ground truth.
pub fn label_quality(manifest: &Path, dataset: &Path, ground_truth: &Path) -> Result<LabelQuality> {
    let records: Vec<ManifestRecord> = read_jsonl(manifest)?;
    let ds: DatasetJson = read_json(dataset)?;
    let truth: BTreeMap<usize, GroundTruthRecord> = read_jsonl::<GroundTruthRecord>(ground_truth)?.into_iter().map(|r| (r.frame, r)).collect();
    let crop = CropRect::from(&ds.crop);
    let mut p3 = Vec::new();
    let mut t3 = Vec::new();
    let mut pixel_errors = Vec::new();
    for rec in &records {
        let gt = truth
            .get(&rec.frame)
            .ok_or_else(|| CliError::format(ground_truth, format!("no ground truth for frame {}", rec.frame)))?;
        p3.push(rec.labels3d.iter().flatten().copied().collect::<Vec<_>>());
        t3.push(gt.positions.iter().flatten().copied().collect::<Vec<_>>());
        for ((label, exact), vis) in rec.labels2d.iter().zip(&gt.pixels).zip(&gt.visible) {
            if *vis {
                let du = (label[0] + crop.u0 as i64) as f64 - exact[0];
                let dv = (label[1] + crop.v0 as i64) as f64 - exact[1];
                pixel_errors.push(vec![du, dv]);
            }
        }
    }
    let position = metrics::report(&p3, &t3, MaeConvention::Euclidean { point_dim: 3 })?;
    let zeros = vec![vec![0.0, 0.0]; pixel_errors.len()];
    let (mean, std) = metrics::mae(&pixel_errors, &zeros, MaeConvention::Euclidean { point_dim: 2 })?;
    Ok(LabelQuality { position: (&position).into(), pixel_visible: ErrorStats { mean, std, n: pixel_errors.len() } })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub simulate: SimulateSummary,
    pub calibrate: CalibrateSummary,
    pub label: LabelSummary,
    pub label_quality: LabelQuality,
    pub train: TrainSummary,
    pub predict: PredictSummary,
    pub eval: RegressionReportJson,
}

/// simulate → calibrate → label → train → predict → eval inside `out`.
pub fn pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineReport> {
    cfg.validate()?;
    create_dir(out)?;
    let sim_dir = out.join("sim");
    let data_dir = out.join("dataset");
    let calib_path = out.join("calibration.json");
    let model_path = out.join("model.bin");
    let pred_path = out.join("predictions.jsonl");

    let simulate = simulate(cfg, &sim_dir)?;
    let calibrate = calibrate(&sim_dir.join(POSE_PAIRS_FILE), cfg.n_calibration, cfg.seed, cfg.qr24_translation_weight, Some(&calib_path))?;
    let label = label(&sim_dir, &sim_dir.join(ANNOTATION_FILE), &calib_path, &data_dir, cfg.crop_margin())?;
    let manifest = data_dir.join(MANIFEST_FILE);
    let label_quality = label_quality(&manifest, &data_dir.join(DATASET_FILE), &sim_dir.join(GROUND_TRUTH_FILE))?;
    let train = train(&TrainRequest {
        manifest: &manifest,
        out: &model_path,
        channels: cfg.channels.into(),
        labels: cfg.labels,
        input_size: cfg.input_size,
        val_fraction: cfg.val_fraction,
        seed: cfg.seed,
        train: cfg.train_config(),
    })?;
    let predict = predict(&model_path, &manifest, &pred_path)?;
    let eval = eval(&pred_path, &manifest, cfg.labels, false)?;
    let report = PipelineReport { seed: cfg.seed, simulate, calibrate, label, label_quality, train, predict, eval };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
