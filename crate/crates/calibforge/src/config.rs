//! The flat TOML pipeline configuration and per-stage seed derivation.
//!
//! Every key is optional; missing keys take the defaults below and unknown keys
//! are rejected. Lengths are meters, angles radians.

use std::path::Path;

use calibforge_core::camera::Intrinsics;
use calibforge_core::geometry::{NoiseParams, RigidTransform, Rotation, Vec3};
use calibforge_core::labeling::CropMargin;
use calibforge_core::phantom::{AcquisitionConfig, HeadPhantom, DEFAULT_ELECTRODES};
use calibforge_core::regressor::{AdamParams, Channels, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChannelsArg {
    Rgb,
    Rgbd,
    D,
}

impl From<ChannelsArg> for Channels {
    fn from(c: ChannelsArg) -> Self {
        match c {
            ChannelsArg::Rgb => Channels::Rgb,
            ChannelsArg::Rgbd => Channels::Rgbd,
            ChannelsArg::D => Channels::Depth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum LabelKind {
    #[serde(rename = "2d")]
    #[value(name = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    #[value(name = "3d")]
    ThreeD,
}

impl LabelKind {
    pub fn dim(self) -> usize {
        match self {
            LabelKind::TwoD => 2,
            LabelKind::ThreeD => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every stage derives its own seed from it.
    pub seed: u64,

    pub semi_axes: [f64; 3],
    pub electrode_radius: f64,
    /// Distance from the endeffector flange to the head center along the flange axis.
    pub head_offset: f64,

    pub image_width: usize,
    pub image_height: usize,
    pub focal_length: f64,

    pub n_frames: usize,
    pub workspace_extent: [f64; 3],
    pub workspace_center: [f64; 3],
    pub rotation_range: [f64; 3],
    pub depth_noise_sigma: f64,
    pub depth_quantization: f64,

    pub n_pose_pairs: usize,
    pub n_calibration: usize,
    pub marker_sigma_t: f64,
    pub marker_sigma_r: f64,
    pub qr24_translation_weight: f64,

    /// Frame to annotate; the frame where the electrodes face the camera best when unset.
    pub reference_frame: Option<usize>,
    pub click_noise_px: u32,
    pub crop_margin_u: usize,
    pub crop_margin_v: usize,

    pub channels: ChannelsArg,
    pub labels: LabelKind,
    pub input_size: usize,
    pub lr0: f64,
    pub batch: usize,
    pub epochs: usize,
    pub halve_every: usize,
    pub val_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let acq = AcquisitionConfig::default();
        let margin = CropMargin::default();
        let train = TrainConfig::default();
        PipelineConfig {
            seed: 0,
            semi_axes: calibforge_core::phantom::DEFAULT_SEMI_AXES,
            electrode_radius: calibforge_core::phantom::DEFAULT_ELECTRODE_RADIUS,
            head_offset: calibforge_core::phantom::DEFAULT_HEAD_OFFSET,
            image_width: Intrinsics::DEFAULT_WIDTH,
            image_height: Intrinsics::DEFAULT_HEIGHT,
            focal_length: Intrinsics::DEFAULT_FOCAL,
            n_frames: acq.n_frames,
            workspace_extent: acq.workspace_extent.into(),
            workspace_center: acq.workspace_center.into(),
            rotation_range: acq.rotation_range.into(),
            depth_noise_sigma: acq.depth_noise_sigma,
            depth_quantization: acq.depth_quantization,
            n_pose_pairs: 50,
            n_calibration: 40,
            marker_sigma_t: 0.0,
            marker_sigma_r: 0.0,
            qr24_translation_weight: 1.0,
            reference_frame: None,
            click_noise_px: 0,
            crop_margin_u: margin.u,
            crop_margin_v: margin.v,
            channels: ChannelsArg::Rgb,
            labels: LabelKind::TwoD,
            input_size: calibforge_core::regressor::DEFAULT_INPUT_SIZE,
            lr0: train.lr0,
            batch: train.batch,
            epochs: train.epochs,
            halve_every: train.halve_every,
            val_fraction: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::format(path, m),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom()?;
        self.intrinsics()?;
        self.acquisition().validate()?;
        self.marker_noise()?;
        self.train_config().validate()?;
        if self.n_calibration < calibforge_core::calibration::MIN_PAIRS || self.n_calibration >= self.n_pose_pairs {
            return Err(CliError::Config(format!(
                "n_calibration must be at least {} and below n_pose_pairs",
                calibforge_core::calibration::MIN_PAIRS
            )));
        }
        if !(self.qr24_translation_weight > 0.0 && self.qr24_translation_weight.is_finite()) {
            return Err(CliError::Config("qr24_translation_weight must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(CliError::Config("val_fraction must lie in (0, 1)".into()));
        }
        if self.input_size == 0 {
            return Err(CliError::Config("input_size must be positive".into()));
        }
        if let Some(r) = self.reference_frame {
            if r >= self.n_frames {
                return Err(CliError::Config("reference_frame must be below n_frames".into()));
            }
        }
        Ok(())
    }

    pub fn phantom(&self) -> Result<HeadPhantom> {
        let [a, b, c] = self.semi_axes;
        let head_to_ef = RigidTransform::from_translation(Vec3::new(0.0, 0.0, self.head_offset));
        Ok(HeadPhantom::new(Vec3::new(a, b, c), &DEFAULT_ELECTRODES, self.electrode_radius, head_to_ef)?)
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Ok(Intrinsics::with_size(self.image_width, self.image_height, self.focal_length)?)
    }

    /// Acquisition settings with the `acquisition` stage seed.
    pub fn acquisition(&self) -> AcquisitionConfig {
        AcquisitionConfig {
            n_frames: self.n_frames,
            workspace_extent: self.workspace_extent.into(),
            workspace_center: self.workspace_center.into(),
            rotation_range: self.rotation_range.into(),
            depth_noise_sigma: self.depth_noise_sigma,
            depth_quantization: self.depth_quantization,
            rng_seed: stage_seed(self.seed, "acquisition"),
            ..AcquisitionConfig::default()
        }
    }

    pub fn marker_noise(&self) -> Result<NoiseParams> {
        Ok(NoiseParams::new(self.marker_sigma_t, self.marker_sigma_r)?)
    }

    pub fn crop_margin(&self) -> CropMargin {
        CropMargin { u: self.crop_margin_u, v: self.crop_margin_v }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            batch: self.batch,
            epochs: self.epochs,
            halve_every: self.halve_every,
            adam: AdamParams::default(),
            rng_seed: stage_seed(self.seed, "train-shuffle"),
        }
    }
}

/// The calibration marker in the endeffector frame used by the simulator.
pub fn simulated_marker_in_endeffector() -> RigidTransform {
    let axis = Vec3::new(1.0, 1.0, 0.0).normalize();
    RigidTransform::new(
        Rotation::from_axis_angle(&axis, 0.4).expect("unit axis"),
        Vec3::new(0.04, -0.03, 0.10),
    )
}

/// First eight bytes, little-endian, of SHA-256(root seed as 8 LE bytes ‖ stage name).
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
