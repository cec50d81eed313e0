//! Automatic label generation.
//!
//! Electrodes are clicked once in a reference frame and lifted into the
//! endeffector frame through the hand-eye calibration:
//!
//! ```text
//! ^EF T_EL = (^R T_EF)⁻¹ · ^R T_K · ^K T_EL
//! ```
//!
//! They are then carried to every other frame `j` by the logged robot pose:
//!
//! ```text
//! ^K T_EL(j) = (^R T_K)⁻¹ · ^R T_EF(j) · ^EF T_EL
//! ```
//!
//! Electrode orientations are set to identity at the click; only the
//! translations are used as labels. 2D labels come from snapping the 3D label
//! to the nearest measured surface point and projecting that point.

use alloc::vec::Vec;

use crate::camera::{round_pixel, CropRect, PointCloud, RgbdFrame};
use crate::geometry::{RigidTransform, Vec3};
use crate::phantom::depth_agrees;
use crate::{Error, Result};

/// Clicked electrode centers in one frame, in fixed electrode order.
///
/// Clicks are pixel coordinates; whole numbers address a pixel directly,
/// fractional ones are read with bilinear depth interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceAnnotation {
    pub frame_index: usize,
    pub clicks: Vec<[f64; 2]>,
}

/// `^EF T_EL_i` for every electrode.
#[derive(Clone, Debug, PartialEq)]
pub struct ElectrodeInEndeffector {
    pub poses: Vec<RigidTransform>,
}

impl ElectrodeInEndeffector {
    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.translation).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame {
    pub frame_index: usize,
    /// Camera frame, meters.
    pub positions_3d: Vec<Vec3>,
    /// Full-image pixels.
    pub pixels_2d: Vec<[i64; 2]>,
    pub visibility: Vec<bool>,
}

/// Horizontal and vertical padding added around the label bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropMargin {
    pub u: usize,
    pub v: usize,
}

impl Default for CropMargin {
    /// Turns a 200×200 px label extent into a 270×254 crop.
    fn default() -> Self {
        CropMargin { u: 35, v: 27 }
    }
}

/// Electrode poses `^K T_EL_i` from the clicks: identity rotation, unprojected translation.
pub fn annotate_reference(frame: &RgbdFrame, ann: &ReferenceAnnotation) -> Result<Vec<RigidTransform>> {
    let intr = &frame.intrinsics;
    ann.clicks
        .iter()
        .enumerate()
        .map(|(i, &[u, v])| {
            let max_u = (intr.width - 1) as f64;
            let max_v = (intr.height - 1) as f64;
            if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) {
                return Err(Error::ClickOutOfBounds { electrode: i, u, v });
            }
            let depth = frame.depth.sample_bilinear(u, v).ok_or(Error::InvalidClickDepth { electrode: i, u, v })?;
            let p = intr.unproject(u, v, depth).map_err(|_| Error::InvalidClickDepth { electrode: i, u, v })?;
            Ok(RigidTransform::from_translation(p))
        })
        .collect()
}

/// Lifts reference-frame electrode poses into the endeffector frame.
pub fn lift_to_endeffector(
    ref_ef_pose: &RigidTransform,
    calib_y: &RigidTransform,
    electrode_poses: &[RigidTransform],
) -> ElectrodeInEndeffector {
    let ef_from_k = ref_ef_pose.inverse().compose(calib_y);
    ElectrodeInEndeffector { poses: electrode_poses.iter().map(|p| ef_from_k.compose(p)).collect() }
}

/// Camera-frame electrode positions for a frame with endeffector pose `ef_pose_j`.
pub fn propagate(in_ef: &ElectrodeInEndeffector, ef_pose_j: &RigidTransform, calib_y: &RigidTransform) -> Vec<Vec3> {
    let k_from_ef = calib_y.inverse().compose(ef_pose_j);
    in_ef.poses.iter().map(|p| k_from_ef.compose(p).translation).collect()
}

/// Nearest surface point of each position, projected and rounded half-up.
pub fn pixel_labels(positions: &[Vec3], frame: &RgbdFrame) -> Result<Vec<[i64; 2]>> {
    pixel_labels_in_cloud(positions, &PointCloud::from_depth(&frame.depth, &frame.intrinsics), frame)
}

pub fn pixel_labels_in_cloud(positions: &[Vec3], cloud: &PointCloud, frame: &RgbdFrame) -> Result<Vec<[i64; 2]>> {
    positions
        .iter()
        .map(|q| {
            let nearest = cloud.nearest_point(q)?;
            let (u, v) = frame.intrinsics.project(&nearest.xyz)?;
            Ok([round_pixel(u), round_pixel(v)])
        })
        .collect()
}

/// Visibility without scene knowledge: the label projects into the image and
/// the measured depth there agrees with its `z`.
pub fn derive_visibility(positions: &[Vec3], frame: &RgbdFrame) -> Vec<bool> {
    positions
        .iter()
        .map(|p| match frame.intrinsics.project(p) {
            Ok((u, v)) => depth_agrees(&frame.depth, &frame.intrinsics, u, v, p.z),
            Err(_) => false,
        })
        .collect()
}

/// Generates 3D and 2D labels for one frame. `visibility` is taken from
/// ground truth when given and derived from the depth image otherwise.
pub fn label_frame(
    frame_index: usize,
    frame: &RgbdFrame,
    in_ef: &ElectrodeInEndeffector,
    calib_y: &RigidTransform,
    visibility: Option<&[bool]>,
) -> Result<LabeledFrame> {
    let positions_3d = propagate(in_ef, &frame.endeffector_pose, calib_y);
    let pixels_2d = pixel_labels(&positions_3d, frame)?;
    let visibility = match visibility {
        Some(v) if v.len() == positions_3d.len() => v.to_vec(),
        Some(v) => return Err(Error::ShapeMismatch { expected: positions_3d.len(), got: v.len() }),
        None => derive_visibility(&positions_3d, frame),
    };
    Ok(LabeledFrame { frame_index, positions_3d, pixels_2d, visibility })
}

/// Bounding box of all pixel labels grown by `margin` and clipped to the image.
pub fn compute_crop<'a, I>(labels: I, margin: CropMargin, width: usize, height: usize) -> Result<CropRect>
where
    I: IntoIterator<Item = &'a [i64; 2]>,
{
    let mut bounds: Option<(i64, i64, i64, i64)> = None;
    for &[u, v] in labels {
        bounds = Some(match bounds {
            None => (u, v, u, v),
            Some((u0, v0, u1, v1)) => (u0.min(u), v0.min(v), u1.max(u), v1.max(v)),
        });
    }
    let (u0, v0, u1, v1) = bounds.ok_or(Error::Empty("pixel label set"))?;
    let (mu, mv) = (margin.u as i64, margin.v as i64);
    let left = (u0 - mu).clamp(0, width as i64 - 1);
    let top = (v0 - mv).clamp(0, height as i64 - 1);
    let right = (u1 + mu).clamp(0, width as i64 - 1);
    let bottom = (v1 + mv).clamp(0, height as i64 - 1);
    if right < left || bottom < top {
        return Err(Error::Empty("crop"));
    }
    Ok(CropRect {
        u0: left as usize,
        v0: top as usize,
        width: (right - left + 1) as usize,
        height: (bottom - top + 1) as usize,
    })
}
