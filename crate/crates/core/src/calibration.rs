//! QR24 hand-eye calibration.
//!
//! Solves `A_i·X = Y·B_i` where `A_i` is the endeffector pose in the robot
//! base frame, `B_i` the calibration marker pose in the camera frame, `X` the
//! marker in the endeffector frame and `Y` the camera in the robot base frame.
//! The 12 entries of each upper 3×4 block are unknowns (24 in total); every
//! pose pair contributes the 12 entrywise equations of the two 3×4 products.
//! The stacked system is solved by Householder QR, after which the rotation
//! blocks are projected to the nearest rotation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::seq::SliceRandom;

use crate::geometry::{nearest_orthogonal, rotation_angle_between, RigidTransform, Vec3};
use crate::rng;
use crate::{Error, Result};

pub const MIN_PAIRS: usize = 3;
/// Minimum second singular value of the stacked relative rotation axes.
pub const AXIS_DIVERSITY_THRESHOLD: f64 = 1e-6;
const UNKNOWNS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosePair {
    /// Endeffector in robot base frame.
    pub robot: RigidTransform,
    /// Calibration marker in camera frame.
    pub marker: RigidTransform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandEyeSolution {
    pub x_marker_to_ef: RigidTransform,
    /// Camera in robot base frame.
    pub y_camera_to_robot: RigidTransform,
    /// RMS of the stacked linear residuals before re-orthonormalization.
    pub residual_rms: f64,
}

impl HandEyeSolution {
    /// Marker pose predicted by the solution for an endeffector pose: `Y⁻¹·A·X`.
    pub fn predict_marker(&self, robot: &RigidTransform) -> RigidTransform {
        self.y_camera_to_robot.inverse().compose(robot).compose(&self.x_marker_to_ef)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qr24Options {
    /// Multiplier applied to the translation rows (which are in meters).
    pub translation_weight: f64,
}

impl Default for Qr24Options {
    fn default() -> Self {
        Qr24Options { translation_weight: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationErrorReport {
    pub position_error_mean: f64,
    pub position_error_std: f64,
    pub rotation_error_mean: f64,
    pub rotation_error_std: f64,
    pub n_eval: usize,
}

pub fn solve_qr24(pairs: &[PosePair]) -> Result<HandEyeSolution> {
    solve_qr24_with(pairs, &Qr24Options::default())
}

pub fn solve_qr24_with(pairs: &[PosePair], opts: &Qr24Options) -> Result<HandEyeSolution> {
    if pairs.len() < MIN_PAIRS {
        return Err(Error::InsufficientPairs { got: pairs.len(), need: MIN_PAIRS });
    }
    if !(opts.translation_weight > 0.0 && opts.translation_weight.is_finite()) {
        return Err(Error::InvalidConfig("translation weight must be positive"));
    }
    check_rotation_diversity(pairs)?;

    let (m, b) = build_system(pairs, opts.translation_weight);
    let qr = m.clone().qr();
    let r = qr.r();
    let diag_max = (0..UNKNOWNS).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let diag_min = (0..UNKNOWNS).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(diag_max > 0.0) || diag_min <= 1e-12 * diag_max {
        return Err(Error::Numeric("hand-eye system is rank deficient"));
    }
    let qtb = qr.q().transpose() * &b;
    let w = r.solve_upper_triangular(&qtb).ok_or(Error::Numeric("triangular solve failed"))?;
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite hand-eye solution"));
    }

    let residual = &m * &w - &b;
    let residual_rms = libm::sqrt(residual.norm_squared() / m.nrows() as f64);

    let x = transform_from_block(&w, 0)?;
    let y = transform_from_block(&w, 12)?;
    Ok(HandEyeSolution { x_marker_to_ef: x, y_camera_to_robot: y, residual_rms })
}

/// Row-major 3×3 block followed by the translation, starting at `offset`.
fn transform_from_block(w: &DVector<f64>, offset: usize) -> Result<RigidTransform> {
    let raw = Matrix3::from_fn(|r, c| w[offset + 3 * r + c]);
    let rotation = nearest_orthogonal(&raw)?;
    let t = Vec3::new(w[offset + 9], w[offset + 10], w[offset + 11]);
    Ok(RigidTransform::new(rotation, t))
}

/// Stacks 12 rows per pair. Unknown layout: `[R_X (row-major), t_X, R_Y (row-major), t_Y]`.
///
/// Rotation rows: `(R_A R_X)_jk − (R_Y R_B)_jk = 0`.
/// Translation rows: `R_A t_X − R_Y t_B − t_Y = −t_A`.
fn build_system(pairs: &[PosePair], translation_weight: f64) -> (DMatrix<f64>, DVector<f64>) {
    let rows = 12 * pairs.len();
    let mut m = DMatrix::zeros(rows, UNKNOWNS);
    let mut b = DVector::zeros(rows);
    for (i, pair) in pairs.iter().enumerate() {
        let ra = pair.robot.rotation.matrix();
        let ta = &pair.robot.translation;
        let rb = pair.marker.rotation.matrix();
        let tb = &pair.marker.translation;
        let base = 12 * i;
        for j in 0..3 {
            for k in 0..3 {
                let row = base + 3 * j + k;
                for l in 0..3 {
                    m[(row, 3 * l + k)] += ra[(j, l)];
                    m[(row, 12 + 3 * j + l)] -= rb[(l, k)];
                }
            }
        }
        for j in 0..3 {
            let row = base + 9 + j;
            for l in 0..3 {
                m[(row, 9 + l)] = translation_weight * ra[(j, l)];
                m[(row, 12 + 3 * j + l)] = -translation_weight * tb[l];
            }
            m[(row, 21 + j)] = -translation_weight;
            b[row] = -translation_weight * ta[j];
        }
    }
    (m, b)
}

/// Second singular value of the stacked unit axes of `R_A0ᵀ R_Ai`.
pub fn rotation_axis_diversity(pairs: &[PosePair]) -> f64 {
    let Some(first) = pairs.first() else {
        return 0.0;
    };
    let base = first.robot.rotation.transpose();
    let mut gram = Matrix3::<f64>::zeros();
    for pair in &pairs[1..] {
        let (axis, angle) = (base * pair.robot.rotation).axis_angle();
        if angle > 1e-9 {
            gram += axis * axis.transpose();
        }
    }
    let mut eig: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|&e| libm::sqrt(e.max(0.0))).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1]
}

fn check_rotation_diversity(pairs: &[PosePair]) -> Result<()> {
    let sigma = rotation_axis_diversity(pairs);
    if sigma > AXIS_DIVERSITY_THRESHOLD {
        Ok(())
    } else {
        Err(Error::DegenerateMotion { second_singular_value: sigma })
    }
}

/// Compares predicted marker poses `Y⁻¹·A·X` with the observed ones.
pub fn evaluate(sol: &HandEyeSolution, held_out: &[PosePair]) -> Result<CalibrationErrorReport> {
    if held_out.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let mut pos = Vec::with_capacity(held_out.len());
    let mut rot = Vec::with_capacity(held_out.len());
    for pair in held_out {
        let predicted = sol.predict_marker(&pair.robot);
        pos.push((predicted.translation - pair.marker.translation).norm());
        rot.push(rotation_angle_between(&predicted.rotation, &pair.marker.rotation));
    }
    let (pm, ps) = mean_std(&pos);
    let (rm, rs) = mean_std(&rot);
    Ok(CalibrationErrorReport {
        position_error_mean: pm,
        position_error_std: ps,
        rotation_error_mean: rm,
        rotation_error_std: rs,
        n_eval: held_out.len(),
    })
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Seeded shuffle, then the first `n_calibration` items for solving and the rest for evaluation.
pub fn split_pairs<T: Clone>(pairs: &[T], n_calibration: usize, rng_seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if n_calibration >= pairs.len() {
        return Err(Error::InvalidSplit { n_calibration, total: pairs.len() });
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng::seeded(rng_seed));
    let calibration = order[..n_calibration].iter().map(|&i| pairs[i].clone()).collect();
    let evaluation = order[n_calibration..].iter().map(|&i| pairs[i].clone()).collect();
    Ok((calibration, evaluation))
}

/// Marker poses from the forward model `B_i = Y⁻¹·A_i·X`.
pub fn forward_pairs(robot_poses: &[RigidTransform], x: &RigidTransform, y: &RigidTransform) -> Vec<PosePair> {
    let y_inv = y.inverse();
    robot_poses
        .iter()
        .map(|a| PosePair { robot: *a, marker: y_inv.compose(a).compose(x) })
        .collect()
}
