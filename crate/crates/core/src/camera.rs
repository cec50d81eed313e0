//! Pinhole camera, co-registered RGBD frames and point clouds.
//!
//! Pixel `(u, v)` addresses column `u`, row `v`; integer coordinates are
//! pixel centers. Depth is the camera-frame `z` in meters and `0.0` marks a
//! pixel without a return.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{RigidTransform, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub const DEFAULT_WIDTH: usize = 524;
    pub const DEFAULT_HEIGHT: usize = 424;
    pub const DEFAULT_FOCAL: f64 = 365.0;

    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Intrinsics { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidIntrinsics("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidIntrinsics("principal point must lie inside the image"));
        }
        Ok(())
    }

    /// Same field of view at `width × height`, principal point at the image center.
    pub fn with_size(width: usize, height: usize, focal: f64) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn project(&self, p_cam: &Vec3) -> Result<(f64, f64)> {
        if !(p_cam.z > 0.0) {
            return Err(Error::BehindCamera { z: p_cam.z });
        }
        Ok((self.fx * p_cam.x / p_cam.z + self.cx, self.fy * p_cam.y / p_cam.z + self.cy))
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::InvalidDepth { depth });
        }
        Ok(Vec3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth))
    }

    /// Viewing ray through `(u, v)` scaled to unit `z`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// True if the continuous pixel coordinate rounds to a pixel inside the image.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics {
            fx: Self::DEFAULT_FOCAL,
            fy: Self::DEFAULT_FOCAL,
            cx: Self::DEFAULT_WIDTH as f64 / 2.0,
            cy: Self::DEFAULT_HEIGHT as f64 / 2.0,
            width: Self::DEFAULT_WIDTH,
            height: Self::DEFAULT_HEIGHT,
        }
    }
}

/// Half-up rounding of a continuous pixel coordinate.
pub fn round_pixel(x: f64) -> i64 {
    libm::floor(x + 0.5) as i64
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch { expected: width * height, got: data.len() });
        }
        if let Some(&d) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidDepth { depth: f64::from(d) });
        }
        Ok(DepthImage { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        DepthImage { width, height, data: vec![0.0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    /// Writes a depth value; negative or non-finite values are stored as invalid (0).
    pub fn set(&mut self, u: usize, v: usize, depth: f32) {
        self.data[v * self.width + u] = if depth.is_finite() && depth > 0.0 { depth } else { 0.0 };
    }

    /// Bilinear depth at a continuous pixel; `None` if any contributing pixel is invalid
    /// or the location is outside the image.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<f64> {
        if u < 0.0 || v < 0.0 || u > (self.width - 1) as f64 || v > (self.height - 1) as f64 {
            return None;
        }
        let (u0, v0) = (libm::floor(u) as usize, libm::floor(v) as usize);
        let (fu, fv) = (u - u0 as f64, v - v0 as f64);
        let u1 = if fu > 0.0 { u0 + 1 } else { u0 };
        let v1 = if fv > 0.0 { v0 + 1 } else { v0 };
        let mut acc = 0.0;
        for (uu, vv, w) in [
            (u0, v0, (1.0 - fu) * (1.0 - fv)),
            (u1, v0, fu * (1.0 - fv)),
            (u0, v1, (1.0 - fu) * fv),
            (u1, v1, fu * fv),
        ] {
            if w == 0.0 {
                continue;
            }
            let d = f64::from(self.get(uu, vv));
            if d <= 0.0 {
                return None;
            }
            acc += w * d;
        }
        Some(acc)
    }

    pub fn crop(&self, rect: &CropRect) -> Self {
        let mut data = Vec::with_capacity(rect.width * rect.height);
        for v in rect.v0..rect.v0 + rect.height {
            data.extend_from_slice(&self.data[v * self.width + rect.u0..v * self.width + rect.u0 + rect.width]);
        }
        DepthImage { width: rect.width, height: rect.height, data }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::ShapeMismatch { expected: 3 * width * height, got: data.len() });
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn black(width: usize, height: usize) -> Self {
        RgbImage { width, height, data: vec![0; 3 * width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = 3 * (v * self.width + u);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn crop(&self, rect: &CropRect) -> Self {
        let mut data = Vec::with_capacity(3 * rect.width * rect.height);
        for v in rect.v0..rect.v0 + rect.height {
            let start = 3 * (v * self.width + rect.u0);
            data.extend_from_slice(&self.data[start..start + 3 * rect.width]);
        }
        RgbImage { width: rect.width, height: rect.height, data }
    }
}

/// Axis-aligned image window; `(u0, v0)` is the top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRect {
    pub u0: usize,
    pub v0: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        CropRect { u0: 0, v0: 0, width, height }
    }

    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= self.u0 as i64
            && v >= self.v0 as i64
            && u < (self.u0 + self.width) as i64
            && v < (self.v0 + self.height) as i64
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.u0 + self.width <= width && self.v0 + self.height <= height
    }
}

/// Color and depth in the same (depth sensor) pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdFrame {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub intrinsics: Intrinsics,
    /// Endeffector in robot base frame at acquisition time.
    pub endeffector_pose: RigidTransform,
}

impl RgbdFrame {
    pub fn new(rgb: RgbImage, depth: DepthImage, intrinsics: Intrinsics, endeffector_pose: RigidTransform) -> Result<Self> {
        if rgb.width != depth.width || rgb.height != depth.height {
            return Err(Error::ShapeMismatch { expected: depth.width * depth.height, got: rgb.width * rgb.height });
        }
        if rgb.width != intrinsics.width || rgb.height != intrinsics.height {
            return Err(Error::InvalidIntrinsics("image size differs from intrinsics"));
        }
        Ok(RgbdFrame { rgb, depth, intrinsics, endeffector_pose })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudPoint {
    pub u: u32,
    pub v: u32,
    pub xyz: Vec3,
    pub valid: bool,
}

/// One entry per pixel, index `v·width + u`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    width: usize,
    height: usize,
    points: Vec<CloudPoint>,
    valid: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestPoint {
    pub u: u32,
    pub v: u32,
    pub xyz: Vec3,
    pub distance: f64,
}

impl PointCloud {
    pub fn from_depth(depth: &DepthImage, intr: &Intrinsics) -> Self {
        let mut points = Vec::with_capacity(depth.width * depth.height);
        let mut valid = Vec::new();
        for v in 0..depth.height {
            for u in 0..depth.width {
                let d = f64::from(depth.get(u, v));
                let (xyz, ok) = match intr.unproject(u as f64, v as f64, d) {
                    Ok(p) => (p, true),
                    Err(_) => (Vec3::zeros(), false),
                };
                if ok {
                    valid.push(points.len() as u32);
                }
                points.push(CloudPoint { u: u as u32, v: v as u32, xyz, valid: ok });
            }
        }
        PointCloud { width: depth.width, height: depth.height, points, valid }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[CloudPoint] {
        &self.points
    }

    pub fn get(&self, u: usize, v: usize) -> &CloudPoint {
        &self.points[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.len()
    }

    pub fn valid_points(&self) -> impl Iterator<Item = &CloudPoint> + '_ {
        self.valid.iter().map(|&i| &self.points[i as usize])
    }

    /// Exhaustive nearest valid point to `q`; ties go to the lowest pixel index.
    pub fn nearest_point(&self, q: &Vec3) -> Result<NearestPoint> {
        let mut best: Option<(f64, u32)> = None;
        // `valid` is sorted by pixel index, so a strict `<` keeps the first minimizer.
        for &i in &self.valid {
            let d2 = (self.points[i as usize].xyz - q).norm_squared();
            if best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, i));
            }
        }
        let (d2, i) = best.ok_or(Error::EmptyCloud)?;
        let p = &self.points[i as usize];
        Ok(NearestPoint { u: p.u, v: p.v, xyz: p.xyz, distance: libm::sqrt(d2) })
    }
}

pub fn to_point_cloud(frame: &RgbdFrame) -> PointCloud {
    PointCloud::from_depth(&frame.depth, &frame.intrinsics)
}
