//! Synthetic acquisition: an ellipsoid head phantom with electrodes, carried
//! by a simulated robot in front of a depth camera.
//!
//! Frames used here:
//! - phantom frame: ellipsoid centered at the origin, `+z` toward the top of the head;
//! - endeffector (EF): the robot flange, `head_to_ef` places the phantom in it;
//! - robot base (R) and camera (K), related by `camera_in_robot` (`^RT_K`).

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::camera::{round_pixel, DepthImage, Intrinsics, RgbImage, RgbdFrame};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::rng;
use crate::{Error, Result};

pub const CAP_COLOR: [u8; 3] = [70, 90, 150];
pub const ELECTRODE_COLOR: [u8; 3] = [235, 205, 40];
/// Depth agreement required for an electrode to count as visible, meters.
pub const VISIBILITY_DEPTH_TOLERANCE: f64 = 0.005;

/// Point on the unit sphere given by polar angle from `+z` and azimuth from `+x`, radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceParam {
    pub polar: f64,
    pub azimuth: f64,
}

/// Eight cap electrodes on the upper half of the head: two near the vertex,
/// a ring of four at 45° and two at 60° toward the temples.
pub const DEFAULT_ELECTRODES: [SurfaceParam; 8] = [
    SurfaceParam { polar: 20.0 * PI / 180.0, azimuth: 90.0 * PI / 180.0 },
    SurfaceParam { polar: 20.0 * PI / 180.0, azimuth: 270.0 * PI / 180.0 },
    SurfaceParam { polar: 45.0 * PI / 180.0, azimuth: 45.0 * PI / 180.0 },
    SurfaceParam { polar: 45.0 * PI / 180.0, azimuth: 135.0 * PI / 180.0 },
    SurfaceParam { polar: 45.0 * PI / 180.0, azimuth: 225.0 * PI / 180.0 },
    SurfaceParam { polar: 45.0 * PI / 180.0, azimuth: 315.0 * PI / 180.0 },
    SurfaceParam { polar: 50.0 * PI / 180.0, azimuth: 0.0 },
    SurfaceParam { polar: 50.0 * PI / 180.0, azimuth: 180.0 * PI / 180.0 },
];
pub const DEFAULT_SEMI_AXES: [f64; 3] = [0.08, 0.10, 0.11];
pub const DEFAULT_ELECTRODE_RADIUS: f64 = 0.005;
/// Phantom center along the flange axis, meters.
pub const DEFAULT_HEAD_OFFSET: f64 = 0.18;

#[derive(Clone, Debug, PartialEq)]
pub struct HeadPhantom {
    semi_axes: Vec3,
    electrodes: Vec<Vec3>,
    electrode_radius: f64,
    head_to_ef: RigidTransform,
}

impl HeadPhantom {
    pub fn new(semi_axes: Vec3, params: &[SurfaceParam], electrode_radius: f64, head_to_ef: RigidTransform) -> Result<Self> {
        if !semi_axes.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidConfig("semi-axes must be positive"));
        }
        if params.is_empty() {
            return Err(Error::InvalidConfig("phantom needs at least one electrode"));
        }
        if !(electrode_radius >= 0.0) {
            return Err(Error::InvalidConfig("electrode radius must be non-negative"));
        }
        let electrodes = params
            .iter()
            .map(|p| {
                let (sp, cp) = (libm::sin(p.polar), libm::cos(p.polar));
                let s = Vec3::new(sp * libm::cos(p.azimuth), sp * libm::sin(p.azimuth), cp);
                s.component_mul(&semi_axes)
            })
            .collect();
        Ok(HeadPhantom { semi_axes, electrodes, electrode_radius, head_to_ef })
    }

    pub fn semi_axes(&self) -> &Vec3 {
        &self.semi_axes
    }

    /// Electrode centers in the phantom frame.
    pub fn electrodes(&self) -> &[Vec3] {
        &self.electrodes
    }

    pub fn electrode_count(&self) -> usize {
        self.electrodes.len()
    }

    pub fn electrode_radius(&self) -> f64 {
        self.electrode_radius
    }

    pub fn head_to_ef(&self) -> &RigidTransform {
        &self.head_to_ef
    }

    /// `x²/a² + y²/b² + z²/c² − 1` in the phantom frame.
    pub fn implicit(&self, p: &Vec3) -> f64 {
        p.component_div(&self.semi_axes).norm_squared() - 1.0
    }

    pub fn outward_normal(&self, p: &Vec3) -> Vec3 {
        let a2 = self.semi_axes.component_mul(&self.semi_axes);
        p.component_div(&a2).normalize()
    }

    /// Smallest positive ray parameter where `origin + t·dir` meets the ellipsoid.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let o = origin.component_div(&self.semi_axes);
        let d = dir.component_div(&self.semi_axes);
        let a = d.norm_squared();
        let bh = o.dot(&d);
        let c = o.norm_squared() - 1.0;
        let disc = bh * bh - a * c;
        if disc < 0.0 || a == 0.0 {
            return None;
        }
        let sq = libm::sqrt(disc);
        let q = if bh > 0.0 { -(bh + sq) } else { -bh + sq };
        if q == 0.0 {
            return None;
        }
        let (t1, t2) = (q / a, c / q);
        let (near, far) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if near > 0.0 {
            Some(near)
        } else if far > 0.0 {
            Some(far)
        } else {
            None
        }
    }

    fn electrode_hit(&self, p: &Vec3) -> bool {
        let r2 = self.electrode_radius * self.electrode_radius;
        self.electrodes.iter().any(|e| (e - p).norm_squared() <= r2)
    }
}

pub fn default_phantom() -> HeadPhantom {
    HeadPhantom::new(
        Vec3::from(DEFAULT_SEMI_AXES),
        &DEFAULT_ELECTRODES,
        DEFAULT_ELECTRODE_RADIUS,
        RigidTransform::from_translation(Vec3::new(0.0, 0.0, DEFAULT_HEAD_OFFSET)),
    )
    .expect("default phantom constants are valid")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionConfig {
    pub n_frames: usize,
    /// Full box size for endeffector positions, camera frame, meters.
    pub workspace_extent: Vec3,
    pub workspace_center: Vec3,
    /// Half-range of the uniform per-axis angles, radians.
    pub rotation_range: Vec3,
    /// Endeffector orientation in the camera frame before the random angles.
    pub nominal_orientation: Rotation,
    /// True `^RT_K`.
    pub camera_in_robot: RigidTransform,
    pub depth_noise_sigma: f64,
    /// Depth rounding step in meters; 0 disables rounding.
    pub depth_quantization: f64,
    pub rng_seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_frames: 3000,
            workspace_extent: Vec3::new(0.5, 0.5, 0.3),
            workspace_center: Vec3::new(0.0, 0.09, 1.25),
            rotation_range: Vec3::new(0.45, 0.45, 0.45),
            nominal_orientation: Rotation::rot_x(2.6),
            camera_in_robot: default_camera_in_robot(),
            depth_noise_sigma: 0.0,
            depth_quantization: 0.000_25,
            rng_seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvalidConfig("n_frames must be at least 1"));
        }
        if !self.workspace_extent.iter().all(|e| *e >= 0.0) || !self.rotation_range.iter().all(|e| *e >= 0.0) {
            return Err(Error::InvalidConfig("workspace extents and rotation ranges must be non-negative"));
        }
        if !(self.depth_noise_sigma >= 0.0 && self.depth_quantization >= 0.0) {
            return Err(Error::InvalidConfig("depth noise and quantization must be non-negative"));
        }
        Ok(())
    }
}

/// Camera mounted about a meter from the robot base, looking back toward it.
pub fn default_camera_in_robot() -> RigidTransform {
    let axis = Vec3::new(0.3, -0.8, 0.5).normalize();
    RigidTransform::from_axis_angle(&axis, 2.1, Vec3::new(0.85, -0.25, 0.55)).expect("unit axis")
}

/// Endeffector poses `^RT_EF`: camera-frame positions uniform in the workspace
/// box, orientation `nominal · Rz(γ)·Ry(β)·Rx(α)` with uniform angles.
pub fn sample_poses(cfg: &AcquisitionConfig) -> Vec<RigidTransform> {
    let mut r = rng::seeded(cfg.rng_seed);
    sample_poses_with(cfg, cfg.n_frames, &mut r)
}

pub fn sample_poses_with<R: Rng + ?Sized>(cfg: &AcquisitionConfig, n: usize, r: &mut R) -> Vec<RigidTransform> {
    let half = cfg.workspace_extent / 2.0;
    (0..n)
        .map(|_| {
            let offset = Vec3::new(
                rng::symmetric_uniform(r, half.x),
                rng::symmetric_uniform(r, half.y),
                rng::symmetric_uniform(r, half.z),
            );
            let ax = rng::symmetric_uniform(r, cfg.rotation_range.x);
            let ay = rng::symmetric_uniform(r, cfg.rotation_range.y);
            let az = rng::symmetric_uniform(r, cfg.rotation_range.z);
            let rotation = cfg.nominal_orientation * Rotation::rot_z(az) * Rotation::rot_y(ay) * Rotation::rot_x(ax);
            let ef_in_camera = RigidTransform::new(rotation, cfg.workspace_center + offset);
            cfg.camera_in_robot.compose(&ef_in_camera)
        })
        .collect()
}

/// `^KT_PH = (^RT_K)⁻¹ · ^RT_EF · ^EFT_PH`.
pub fn phantom_in_camera(phantom: &HeadPhantom, ef_pose: &RigidTransform, camera_in_robot: &RigidTransform) -> RigidTransform {
    camera_in_robot.inverse().compose(ef_pose).compose(&phantom.head_to_ef)
}

/// Exact electrode centers in the camera frame.
pub fn electrode_positions(phantom: &HeadPhantom, ef_pose: &RigidTransform, camera_in_robot: &RigidTransform) -> Vec<Vec3> {
    let pose = phantom_in_camera(phantom, ef_pose, camera_in_robot);
    phantom.electrodes.iter().map(|e| pose.transform_point(e)).collect()
}

/// Cosine between each electrode's outward normal and the direction back to
/// the camera; positive values face the camera.
pub fn electrode_facing(phantom: &HeadPhantom, ef_pose: &RigidTransform, camera_in_robot: &RigidTransform) -> Vec<f64> {
    let pose = phantom_in_camera(phantom, ef_pose, camera_in_robot);
    phantom
        .electrodes
        .iter()
        .map(|e| {
            let p = pose.transform_point(e);
            let n = pose.rotation.apply(&phantom.outward_normal(e));
            -n.dot(&p) / p.norm()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthFrame {
    pub frame: RgbdFrame,
    pub electrode_positions_camera: Vec<Vec3>,
    /// Exact continuous projections of the positions.
    pub electrode_pixels: Vec<[f64; 2]>,
    pub visibility: Vec<bool>,
    pub facing: Vec<f64>,
}

/// Ray-traces one frame. Pixel noise is drawn from `(cfg.rng_seed, frame_index, pixel)`
/// so the result does not depend on rendering order.
pub fn render(
    phantom: &HeadPhantom,
    ef_pose: &RigidTransform,
    cfg: &AcquisitionConfig,
    intr: &Intrinsics,
    frame_index: u64,
) -> GroundTruthFrame {
    let pose = phantom_in_camera(phantom, ef_pose, &cfg.camera_in_robot);
    let inv = pose.inverse();
    let origin = inv.translation;
    let mut depth = DepthImage::zeros(intr.width, intr.height);
    let mut rgb = RgbImage::black(intr.width, intr.height);

    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = inv.rotation.apply(&intr.ray(u as f64, v as f64));
            let Some(t) = phantom.intersect(&origin, &dir) else {
                continue;
            };
            // The camera-frame ray has unit z, so the ray parameter is the depth.
            let mut d = t;
            if cfg.depth_noise_sigma > 0.0 {
                let index = (v * intr.width + u) as u64;
                d += cfg.depth_noise_sigma * rng::indexed_normal(cfg.rng_seed, 1 + frame_index, index);
            }
            if cfg.depth_quantization > 0.0 {
                d = libm::round(d / cfg.depth_quantization) * cfg.depth_quantization;
            }
            depth.set(u, v, d.max(0.0) as f32);
            let hit = origin + dir * t;
            rgb.set(u, v, if phantom.electrode_hit(&hit) { ELECTRODE_COLOR } else { CAP_COLOR });
        }
    }

    let positions: Vec<Vec3> = phantom.electrodes.iter().map(|e| pose.transform_point(e)).collect();
    let facing = electrode_facing(phantom, ef_pose, &cfg.camera_in_robot);
    let mut pixels = Vec::with_capacity(positions.len());
    let mut visibility = Vec::with_capacity(positions.len());
    for (p, f) in positions.iter().zip(&facing) {
        let Ok((pu, pv)) = intr.project(p) else {
            pixels.push([f64::NAN, f64::NAN]);
            visibility.push(false);
            continue;
        };
        pixels.push([pu, pv]);
        visibility.push(*f > 0.0 && depth_agrees(&depth, intr, pu, pv, p.z));
    }

    let frame = RgbdFrame { rgb, depth, intrinsics: *intr, endeffector_pose: *ef_pose };
    GroundTruthFrame { frame, electrode_positions_camera: positions, electrode_pixels: pixels, visibility, facing }
}

/// Rendered depth at the rounded pixel is valid and within
/// [`VISIBILITY_DEPTH_TOLERANCE`] of `z`.
pub(crate) fn depth_agrees(depth: &DepthImage, intr: &Intrinsics, u: f64, v: f64, z: f64) -> bool {
    if !intr.contains(u, v) {
        return false;
    }
    let d = f64::from(depth.get(round_pixel(u) as usize, round_pixel(v) as usize));
    d > 0.0 && (d - z).abs() <= VISIBILITY_DEPTH_TOLERANCE
}

/// Index of the pose whose least camera-facing electrode faces the camera best.
pub fn best_reference_pose(phantom: &HeadPhantom, poses: &[RigidTransform], camera_in_robot: &RigidTransform) -> Option<usize> {
    poses
        .iter()
        .map(|p| electrode_facing(phantom, p, camera_in_robot).into_iter().fold(f64::INFINITY, f64::min))
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
}

/// Annotator clicks from ground truth. With `noise_px = 0` the clicks are the
/// exact sub-pixel projections; otherwise each is the rounded projection
/// shifted by a uniform integer in `[-noise_px, noise_px]` per axis.
pub fn simulated_clicks(gt: &GroundTruthFrame, noise_px: u32, rng_seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng::seeded(rng_seed);
    let k = i64::from(noise_px);
    let intr = &gt.frame.intrinsics;
    gt.electrode_pixels
        .iter()
        .map(|&[u, v]| {
            let click = if noise_px == 0 {
                [u, v]
            } else {
                let du = r.random_range(-k..=k);
                let dv = r.random_range(-k..=k);
                let cu = (round_pixel(u) + du).clamp(0, intr.width as i64 - 1);
                let cv = (round_pixel(v) + dv).clamp(0, intr.height as i64 - 1);
                [cu as f64, cv as f64]
            };
            if gt.frame.depth.sample_bilinear(click[0], click[1]).is_some() {
                click
            } else {
                nearest_valid_pixel(&gt.frame.depth, click).unwrap_or(click)
            }
        })
        .collect()
}

/// Closest pixel centre with a valid depth reading; ties go to the first in row-major order.
fn nearest_valid_pixel(depth: &DepthImage, [u, v]: [f64; 2]) -> Option<[f64; 2]> {
    let mut best: Option<(f64, [f64; 2])> = None;
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if depth.get(x, y) <= 0.0 {
                continue;
            }
            let (du, dv) = (x as f64 - u, y as f64 - v);
            let d = du * du + dv * dv;
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, [x as f64, y as f64]));
            }
        }
    }
    best.map(|(_, p)| p)
}
