//! JSON and JSON-lines records exchanged between subcommands.
//!
//! A pose is `{"r": [9 numbers, row-major], "t": [3 numbers, meters]}`. Readers
//! accept rotation blocks within 1e-6 of orthonormal and snap them back to an
//! exact rotation.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use calibforge_core::calibration::{CalibrationErrorReport, HandEyeSolution, PosePair};
use calibforge_core::camera::{CropRect, Intrinsics};
use calibforge_core::geometry::{nearest_orthogonal, Mat3, Rotation, RigidTransform, Vec3, ROTATION_TOLERANCE};
use calibforge_core::metrics::RegressionReport;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Rotation tolerance for poses read from files.
pub const WIRE_ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&RigidTransform> for PoseJson {
    fn from(pose: &RigidTransform) -> Self {
        let m = pose.rotation.matrix();
        let mut r = [0.0; 9];
        for (i, v) in r.iter_mut().enumerate() {
            *v = m[(i / 3, i % 3)];
        }
        PoseJson { r, t: [pose.translation.x, pose.translation.y, pose.translation.z] }
    }
}

impl PoseJson {
    pub fn to_transform(&self) -> std::result::Result<RigidTransform, String> {
        if !self.r.iter().chain(&self.t).all(|v| v.is_finite()) {
            return Err("pose contains a non-finite number".into());
        }
        let m = Mat3::from_row_slice(&self.r);
        let rotation = Rotation::from_matrix_with_tolerance(m, WIRE_ROTATION_TOLERANCE).map_err(|e| e.to_string())?;
        let rotation = if Rotation::from_matrix(m).is_ok() {
            rotation
        } else {
            nearest_orthogonal(&m).map_err(|e| e.to_string())?
        };
        debug_assert!(calibforge_core::geometry::rotation_deviation(rotation.matrix()) <= ROTATION_TOLERANCE);
        Ok(RigidTransform::new(rotation, Vec3::new(self.t[0], self.t[1], self.t[2])))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosePairJson {
    pub robot: PoseJson,
    pub marker: PoseJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationJson {
    pub frame_index: usize,
    pub clicks: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationJson {
    /// Marker in the endeffector frame.
    pub x: PoseJson,
    /// Camera in the robot base frame.
    pub y: PoseJson,
    pub residual_rms: f64,
}

impl From<&HandEyeSolution> for CalibrationJson {
    fn from(sol: &HandEyeSolution) -> Self {
        CalibrationJson {
            x: (&sol.x_marker_to_ef).into(),
            y: (&sol.y_camera_to_robot).into(),
            residual_rms: sol.residual_rms,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl From<&Intrinsics> for IntrinsicsJson {
    fn from(i: &Intrinsics) -> Self {
        IntrinsicsJson { fx: i.fx, fy: i.fy, cx: i.cx, cy: i.cy, width: i.width, height: i.height }
    }
}

impl IntrinsicsJson {
    pub fn to_intrinsics(&self) -> std::result::Result<Intrinsics, String> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height).map_err(|e| e.to_string())
    }
}

/// One line of the robot log written next to the rendered frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame: usize,
    pub rgb: String,
    pub depth: String,
    pub ef_pose: PoseJson,
}

/// Simulator ground truth for one frame, in full-image coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub frame: usize,
    pub ef_pose: PoseJson,
    pub positions: Vec<[f64; 3]>,
    pub pixels: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

/// The simulator's hidden parameters, for checking a run end to end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthJson {
    pub camera_in_robot: PoseJson,
    pub marker_in_endeffector: PoseJson,
    pub reference_frame: usize,
}

/// One labeled dataset frame. Image paths are relative to the manifest and
/// `labels2d` are in crop pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub frame: usize,
    pub rgb: String,
    pub depth: String,
    pub ef_pose: PoseJson,
    pub labels3d: Vec<[f64; 3]>,
    pub labels2d: Vec<[i64; 2]>,
    pub visible: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropJson {
    pub u0: usize,
    pub v0: usize,
    pub width: usize,
    pub height: usize,
}

impl From<&CropRect> for CropJson {
    fn from(c: &CropRect) -> Self {
        CropJson { u0: c.u0, v0: c.v0, width: c.width, height: c.height }
    }
}

impl From<&CropJson> for CropRect {
    fn from(c: &CropJson) -> Self {
        CropRect { u0: c.u0, v0: c.v0, width: c.width, height: c.height }
    }
}

/// Sidecar describing a labeled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetJson {
    pub crop: CropJson,
    pub n_points: usize,
    pub n_frames: usize,
    pub reference_frame: usize,
}

/// One model prediction: `points` holds N rows of 2 or 3 coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub frame: usize,
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReportJson {
    pub position_error_mean: f64,
    pub position_error_std: f64,
    pub rotation_error_mean: f64,
    pub rotation_error_std: f64,
    pub rotation_error_mean_deg: f64,
    pub n_eval: usize,
}

impl From<&CalibrationErrorReport> for CalibrationReportJson {
    fn from(r: &CalibrationErrorReport) -> Self {
        CalibrationReportJson {
            position_error_mean: r.position_error_mean,
            position_error_std: r.position_error_std,
            rotation_error_mean: r.rotation_error_mean,
            rotation_error_std: r.rotation_error_std,
            rotation_error_mean_deg: r.rotation_error_mean.to_degrees(),
            n_eval: r.n_eval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReportJson {
    pub mae_mean: f64,
    pub mae_std: f64,
    pub rmae: f64,
    pub acc: f64,
    pub n_samples: usize,
    pub n_outputs: usize,
    pub mae_convention: String,
}

impl From<&RegressionReport> for RegressionReportJson {
    fn from(r: &RegressionReport) -> Self {
        RegressionReportJson {
            mae_mean: r.mae_mean,
            mae_std: r.mae_std,
            rmae: r.rmae,
            acc: r.acc,
            n_samples: r.n_samples,
            n_outputs: r.n_outputs,
            mae_convention: r.convention.name().to_string(),
        }
    }
}

pub fn pose_from_json(path: &Path, pose: &PoseJson) -> Result<RigidTransform> {
    pose.to_transform().map_err(|e| CliError::format(path, e))
}

pub fn pairs_from_json(path: &Path, pairs: &[PosePairJson]) -> Result<Vec<PosePair>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let robot = p.robot.to_transform().map_err(|e| CliError::format(path, format!("pair {i} robot: {e}")))?;
            let marker = p.marker.to_transform().map_err(|e| CliError::format(path, format!("pair {i} marker: {e}")))?;
            Ok(PosePair { robot, marker })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CliError::read(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::read(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::format(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::write(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}
