//! End-to-end acceptance checks. Runs every criterion in sequence, prints one
//! PASS/FAIL line each and exits non-zero if any failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use calibforge::commands::{self, MANIFEST_FILE};
use calibforge::config::{simulated_marker_in_endeffector, PipelineConfig};
use calibforge_core::calibration::{evaluate, forward_pairs, solve_qr24, split_pairs, PosePair};
use calibforge_core::camera::{round_pixel, Intrinsics};
use calibforge_core::geometry::{perturb_with, random_transform, rotation_angle_between, NoiseParams, RigidTransform, Vec3};
use calibforge_core::labeling::{annotate_reference, compute_crop, label_frame, lift_to_endeffector, CropMargin, ReferenceAnnotation};
use calibforge_core::metrics::{self, MaeConvention};
use calibforge_core::phantom::{best_reference_pose, default_phantom, render, sample_poses, sample_poses_with, simulated_clicks, AcquisitionConfig};
use calibforge_core::regressor::{self, adam_step, mean_predictor_report, prepare_input, AdamParams, AdamState, Channels, Model, ModelConfig, Sample, TrainConfig};
use calibforge_core::rng;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget: Duration, detail: String) -> Outcome {
    let elapsed = start.elapsed();
    check(elapsed < budget, format!("{detail}; {:.1} s of {} s", elapsed.as_secs_f64(), budget.as_secs()))
}

fn marker_noise() -> NoiseParams {
    NoiseParams::new(0.002, 0.3_f64.to_radians()).unwrap()
}

/// One calibration trial: 50 poses from the acquisition workspace, noisy
/// marker observations, 40 pairs solved and 10 evaluated.
fn calibration_trial(seed: u64) -> (calibforge_core::calibration::HandEyeSolution, calibforge_core::calibration::CalibrationErrorReport) {
    let acq = AcquisitionConfig::default();
    let mut r = rng::seeded(seed);
    let robot = sample_poses_with(&acq, 50, &mut r);
    let noise = marker_noise();
    let pairs: Vec<PosePair> = forward_pairs(&robot, &simulated_marker_in_endeffector(), &acq.camera_in_robot)
        .into_iter()
        .map(|p| PosePair { robot: p.robot, marker: perturb_with(&p.marker, &noise, &mut r) })
        .collect();
    let (cal, eval) = split_pairs(&pairs, 40, seed ^ 0x5eed).unwrap();
    let sol = solve_qr24(&cal).unwrap();
    let report = evaluate(&sol, &eval).unwrap();
    (sol, report)
}

fn qr24_exact_recovery() -> Outcome {
    let start = Instant::now();
    let (mut worst_t, mut worst_r) = (0.0_f64, 0.0_f64);
    for instance in 0..100 {
        let mut r = rng::seeded(1000 + instance);
        let x = random_transform(&mut r, 0.2);
        let y = random_transform(&mut r, 1.5);
        let robot: Vec<RigidTransform> = (0..50).map(|_| random_transform(&mut r, 0.5)).collect();
        let sol = solve_qr24(&forward_pairs(&robot, &x, &y)).map_err(|e| format!("instance {instance}: {e}"))?;
        for (est, truth) in [(sol.x_marker_to_ef, x), (sol.y_camera_to_robot, y)] {
            worst_t = worst_t.max((est.translation - truth.translation).norm());
            worst_r = worst_r.max(rotation_angle_between(&est.rotation, &truth.rotation));
        }
    }
    let ok = worst_t < 1e-8 && worst_r < 1e-8;
    within_budget(start, Duration::from_secs(5), format!("worst position {worst_t:.1e} m, rotation {worst_r:.1e} rad"))
        .and_then(|d| check(ok, d))
}

fn calibration_error_regime() -> Outcome {
    let start = Instant::now();
    let (mut pos, mut rot) = (0.0, 0.0);
    for trial in 0..50 {
        let (_, report) = calibration_trial(trial);
        pos += report.position_error_mean / 50.0;
        rot += report.rotation_error_mean / 50.0;
    }
    let (pos_mm, rot_deg) = (pos * 1e3, rot.to_degrees());
    let ok = (1.0..=10.0).contains(&pos_mm) && (0.1..=2.0).contains(&rot_deg);
    within_budget(start, Duration::from_secs(30), format!("position {pos_mm:.2} mm, rotation {rot_deg:.3} deg"))
        .and_then(|d| check(ok, d))
}

struct LabelErrors {
    mae_3d: f64,
    mae_2d_visible: f64,
    max_3d: f64,
    max_2d_visible: f64,
    /// Largest per-axis step between a label and the rounded exact projection.
    max_2d_grid_visible: i64,
    n_visible: usize,
}

/// Streams `n_frames` rendered frames through label generation and compares
/// the labels with the renderer's ground truth.
fn label_errors(n_frames: usize, seed: u64, calib_y: &RigidTransform, click_noise_px: u32) -> Result<LabelErrors, String> {
    let phantom = default_phantom();
    let acq = AcquisitionConfig { n_frames, rng_seed: seed, ..AcquisitionConfig::default() };
    let intr = Intrinsics::default();
    let poses = sample_poses(&acq);
    let reference = best_reference_pose(&phantom, &poses, &acq.camera_in_robot).unwrap();
    let ref_gt = render(&phantom, &poses[reference], &acq, &intr, reference as u64);
    let clicks = simulated_clicks(&ref_gt, click_noise_px, seed + 1);
    let clicked = annotate_reference(&ref_gt.frame, &ReferenceAnnotation { frame_index: reference, clicks }).map_err(|e| e.to_string())?;
    let in_ef = lift_to_endeffector(&poses[reference], calib_y, &clicked);

    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    let (mut sum_2d, mut max_2d, mut max_grid, mut n_visible) = (0.0, 0.0_f64, 0_i64, 0usize);
    for (i, pose) in poses.iter().enumerate() {
        let gt = render(&phantom, pose, &acq, &intr, i as u64);
        let labels = label_frame(i, &gt.frame, &in_ef, calib_y, None).map_err(|e| format!("frame {i}: {e}"))?;
        pred.push(labels.positions_3d.iter().flat_map(|p| [p.x, p.y, p.z]).collect::<Vec<f64>>());
        truth.push(gt.electrode_positions_camera.iter().flat_map(|p| [p.x, p.y, p.z]).collect::<Vec<f64>>());
        for ((px, exact), visible) in labels.pixels_2d.iter().zip(&gt.electrode_pixels).zip(&gt.visibility) {
            if *visible {
                let d = ((px[0] as f64 - exact[0]).powi(2) + (px[1] as f64 - exact[1]).powi(2)).sqrt();
                sum_2d += d;
                max_2d = max_2d.max(d);
                let steps = (px[0] - round_pixel(exact[0])).abs().max((px[1] - round_pixel(exact[1])).abs());
                max_grid = max_grid.max(steps);
                n_visible += 1;
            }
        }
    }
    let (mae_3d, _) = metrics::mae(&pred, &truth, MaeConvention::Euclidean { point_dim: 3 }).map_err(|e| e.to_string())?;
    let max_3d = pred
        .iter()
        .zip(&truth)
        .flat_map(|(p, t)| p.chunks(3).zip(t.chunks(3)).map(|(a, b)| Vec3::from_row_slice(a).metric_distance(&Vec3::from_row_slice(b))))
        .fold(0.0, f64::max);
    Ok(LabelErrors { mae_3d, mae_2d_visible: sum_2d / n_visible.max(1) as f64, max_3d, max_2d_visible: max_2d, max_2d_grid_visible: max_grid, n_visible })
}

fn noiseless_label_round_trip() -> Outcome {
    let q = AcquisitionConfig::default().depth_quantization;
    let e = label_errors(100, 21, &AcquisitionConfig::default().camera_in_robot, 0)?;
    check(
        e.max_3d < 2.0 * q && e.max_2d_grid_visible <= 1,
        format!(
            "worst 3D {:.3} mm (bound {:.2} mm); over {} visible electrodes the worst 2D label is {} pixel step(s) from the rounded exact projection, {:.3} px from the continuous one",
            e.max_3d * 1e3,
            2e3 * q,
            e.n_visible,
            e.max_2d_grid_visible,
            e.max_2d_visible
        ),
    )
}

fn generated_label_error_regime() -> Outcome {
    let start = Instant::now();
    let (sol, calib) = calibration_trial(31);
    let e = label_errors(500, 31, &sol.y_camera_to_robot, 2)?;
    let (mm, px) = (e.mae_3d * 1e3, e.mae_2d_visible);
    let ok = (1.0..=15.0).contains(&mm) && (0.3..=4.0).contains(&px);
    within_budget(
        start,
        Duration::from_secs(120),
        format!(
            "calibration {:.2} mm / {:.3} deg; 3D MAE {mm:.2} mm, 2D MAE {px:.2} px over {} visible electrodes",
            calib.position_error_mean * 1e3,
            calib.rotation_error_mean.to_degrees(),
            e.n_visible
        ),
    )
    .and_then(|d| check(ok, d))
}

fn loop_mae(pred: &[Vec<f64>], target: &[Vec<f64>], dim: usize) -> f64 {
    let mut per_sample = Vec::new();
    for s in 0..pred.len() {
        let mut total = 0.0;
        let n = pred[s].len() / dim;
        for k in 0..n {
            let mut sq = 0.0;
            for c in 0..dim {
                let d = pred[s][k * dim + c] - target[s][k * dim + c];
                sq += d * d;
            }
            total += sq.sqrt();
        }
        per_sample.push(total / n as f64);
    }
    per_sample.iter().sum::<f64>() / per_sample.len() as f64
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

fn loop_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn loop_std(v: &[f64]) -> f64 {
    let m = loop_mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn loop_rmae(pred: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let mut ratios = Vec::new();
    for j in 0..target[0].len() {
        let t = column(target, j);
        let err: Vec<f64> = column(pred, j).iter().zip(&t).map(|(p, t)| (p - t).abs()).collect();
        ratios.push(loop_mean(&err) / loop_std(&t));
    }
    loop_mean(&ratios)
}

fn loop_acc(pred: &[Vec<f64>], target: &[Vec<f64>]) -> f64 {
    let mut corr = Vec::new();
    for j in 0..target[0].len() {
        let (p, t) = (column(pred, j), column(target, j));
        let (mp, mt) = (loop_mean(&p), loop_mean(&t));
        let mut cov = 0.0;
        for s in 0..p.len() {
            cov += (p[s] - mp) * (t[s] - mt);
        }
        corr.push(cov / p.len() as f64 / (loop_std(&p) * loop_std(&t)));
    }
    loop_mean(&corr)
}

fn metric_oracles() -> Outcome {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let mut worst = 0.0_f64;
    let mut r = rng::seeded(55);
    for instance in 0..20 {
        let s = r.random_range(2..60);
        let dim = if instance % 2 == 0 { 2 } else { 3 };
        let d = dim * r.random_range(1..10);
        let target: Vec<Vec<f64>> = (0..s).map(|_| (0..d).map(|_| r.random_range(-50.0..50.0)).collect()).collect();
        let pred: Vec<Vec<f64>> = target.iter().map(|t| t.iter().map(|x| 0.7 * x + r.random_range(-5.0..5.0)).collect()).collect();
        let (mae, _) = metrics::mae(&pred, &target, MaeConvention::Euclidean { point_dim: dim }).map_err(|e| e.to_string())?;
        let rmae = metrics::rmae(&pred, &target).map_err(|e| e.to_string())?;
        let acc = metrics::acc(&pred, &target).map_err(|e| e.to_string())?;
        for (got, want) in [(mae, loop_mae(&pred, &target, dim)), (rmae, loop_rmae(&pred, &target)), (acc, loop_acc(&pred, &target))] {
            worst = worst.max(rel(got, want));
        }
    }
    let target: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64, -2.0 * i as f64]).collect();
    let (mae, mae_std) = metrics::mae(&target, &target, MaeConvention::Euclidean { point_dim: 3 }).map_err(|e| e.to_string())?;
    let acc = metrics::acc(&target, &target).map_err(|e| e.to_string())?;
    let identities = mae == 0.0 && mae_std == 0.0 && acc == 1.0;
    check(worst < 1e-12 && identities, format!("worst relative deviation {worst:.1e}; perfect prediction MAE {mae}, aCC {acc}"))
}

fn gradient_check() -> Outcome {
    let cfg = ModelConfig::new(Channels::Rgbd, 8, 3);
    let mut model = Model::init(cfg.clone(), 17).map_err(|e| e.to_string())?;
    let mut r = rng::seeded(18);
    let inputs: Vec<Vec<f64>> = (0..3).map(|_| (0..cfg.input_len()).map(|_| r.random::<f64>()).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..3).map(|_| (0..cfg.output_dim()).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let n_params = cfg.param_count();
    let mut state = AdamState::new(n_params);
    let mut worst = [0.0_f64; 2];
    for (stage, worst) in worst.iter_mut().enumerate() {
        if stage == 1 {
            for _ in 0..10 {
                let (_, g) = model.loss_and_grad(&inputs, &targets).map_err(|e| e.to_string())?;
                adam_step(&mut state, model.params_mut(), &g, 1e-3, &AdamParams::default()).map_err(|e| e.to_string())?;
            }
        }
        let (_, grad) = model.loss_and_grad(&inputs, &targets).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for _ in 0..120 {
            let i = r.random_range(0..n_params);
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let (lp, _) = model.loss_and_grad(&inputs, &targets).map_err(|e| e.to_string())?;
            model.params_mut()[i] = orig - h;
            let (lm, _) = model.loss_and_grad(&inputs, &targets).map_err(|e| e.to_string())?;
            model.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-7);
            *worst = worst.max(err);
        }
    }
    check(
        worst.iter().all(|w| *w < 1e-4),
        format!("120 parameters of {n_params}; worst relative error {:.1e} at init, {:.1e} after 10 Adam steps", worst[0], worst[1]),
    )
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let phantom = default_phantom();
    let acq = AcquisitionConfig { n_frames: 300, rng_seed: 11, ..AcquisitionConfig::default() };
    let intr = Intrinsics::default();
    let poses = sample_poses(&acq);
    let y = acq.camera_in_robot;
    let reference = best_reference_pose(&phantom, &poses, &y).unwrap();
    let ref_gt = render(&phantom, &poses[reference], &acq, &intr, reference as u64);
    let clicks = simulated_clicks(&ref_gt, 0, 0);
    let clicked = annotate_reference(&ref_gt.frame, &ReferenceAnnotation { frame_index: reference, clicks }).map_err(|e| e.to_string())?;
    let in_ef = lift_to_endeffector(&poses[reference], &y, &clicked);

    // Two streaming passes: labels first to fix the crop, then the cropped inputs.
    let mut labels = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let gt = render(&phantom, pose, &acq, &intr, i as u64);
        labels.push(label_frame(i, &gt.frame, &in_ef, &y, None).map_err(|e| e.to_string())?.pixels_2d);
    }
    let crop = compute_crop(labels.iter().flatten(), CropMargin::default(), intr.width, intr.height).map_err(|e| e.to_string())?;
    let mut samples = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let gt = render(&phantom, pose, &acq, &intr, i as u64);
        let input = prepare_input(&gt.frame.rgb.crop(&crop), &gt.frame.depth.crop(&crop), Channels::Rgb, 64, 64).map_err(|e| e.to_string())?;
        let target = labels[i].iter().flat_map(|p| [(p[0] - crop.u0 as i64) as f64, (p[1] - crop.v0 as i64) as f64]).collect();
        samples.push(Sample { input, target });
    }
    let (train_set, val_set) = samples.split_at(270);
    let baseline = mean_predictor_report(train_set, val_set, 2).map_err(|e| e.to_string())?;
    let model = Model::init(ModelConfig::new(Channels::Rgb, 8, 2), 1).map_err(|e| e.to_string())?;
    let tc = TrainConfig { rng_seed: 1, ..TrainConfig::default() };
    let outcome = regressor::train(model, train_set, val_set, &tc).map_err(|e| e.to_string())?;
    let best = outcome.best.evaluate(val_set).map_err(|e| e.to_string())?;
    let ok = best.mae_mean < 0.5 * baseline.mae_mean && best.acc >= 0.9 && outcome.log.len() <= 200;
    within_budget(
        start,
        Duration::from_secs(600),
        format!(
            "crop {}x{}; val MAE {:.2} px vs mean predictor {:.2} px, aCC {:.3}, best epoch {} of {}",
            crop.width,
            crop.height,
            best.mae_mean,
            baseline.mae_mean,
            best.acc,
            outcome.best_epoch,
            outcome.log.len()
        ),
    )
    .and_then(|d| check(ok, d))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        seed: 7,
        n_frames: 60,
        image_width: 262,
        image_height: 212,
        focal_length: 182.5,
        marker_sigma_t: 0.002,
        marker_sigma_r: 0.3_f64.to_radians(),
        click_noise_px: 2,
        epochs: 4,
        input_size: 32,
        ..PipelineConfig::default()
    };
    let runs = ["a", "b"].map(|name| {
        let out = dir.path().join(name);
        commands::pipeline(&cfg, &out).map(|_| out)
    });
    let [a, b] = runs;
    let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
    let files = [
        format!("dataset/{MANIFEST_FILE}"),
        "calibration.json".to_string(),
        "report.json".to_string(),
        "model.bin".to_string(),
        "predictions.jsonl".to_string(),
    ];
    let mut differing = Vec::new();
    for f in &files {
        let read = |p: &std::path::Path| std::fs::read(p.join(f)).map_err(|e| format!("{f}: {e}"));
        if read(&a)? != read(&b)? {
            differing.push(f.clone());
        }
    }
    check(differing.is_empty(), format!("compared {} artifacts, differing: {differing:?}", files.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("QR24 exact recovery", qr24_exact_recovery),
        ("calibration error regime", calibration_error_regime),
        ("noiseless label round trip", noiseless_label_round_trip),
        ("generated label error regime", generated_label_error_regime),
        ("metric oracles", metric_oracles),
        ("gradient check", gradient_check),
        ("learnability", learnability),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {name}: {status} ({detail}) [{:.1} s]", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
