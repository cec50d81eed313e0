//! Flat binary model files.
//!
//! All integers are little-endian `u32`, floats little-endian.
//!
//! | field                 | type              |
//! |-----------------------|-------------------|
//! | magic `CFRM`          | 4 bytes           |
//! | format version (1)    | u32               |
//! | input width, height   | u32, u32          |
//! | channels (0 RGB, 1 RGBD, 2 D) | u32       |
//! | label dim (2 or 3)    | u32               |
//! | point count N         | u32               |
//! | conv channels c1, c2  | u32, u32          |
//! | dense hidden size     | u32               |
//! | parameter count P     | u32               |
//! | target mean, std      | 2 · N·dim × f64   |
//! | parameters            | P × f32           |
//!
//! Parameters are stored as `f32`, so a loaded model differs from the trained
//! one by that rounding. [`round_params`] applies the same rounding in memory.

use std::path::Path;

use calibforge_core::regressor::{Channels, Model, ModelConfig, TargetNormalizer, TrainedModel};

use crate::error::{CliError, Result};
use crate::image_io::{read_bytes, write_bytes};

pub const MAGIC: &[u8; 4] = b"CFRM";
pub const VERSION: u32 = 1;

fn channel_code(c: Channels) -> u32 {
    match c {
        Channels::Rgb => 0,
        Channels::Rgbd => 1,
        Channels::Depth => 2,
    }
}

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let cfg = model.model.config();
    let mut out = MAGIC.to_vec();
    let header = [
        VERSION,
        cfg.input_width as u32,
        cfg.input_height as u32,
        channel_code(cfg.channels),
        cfg.label_dim as u32,
        cfg.n_points as u32,
        cfg.conv_channels[0] as u32,
        cfg.conv_channels[1] as u32,
        cfg.dense_hidden as u32,
        model.model.params().len() as u32,
    ];
    for v in header {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in model.normalizer.mean.iter().chain(&model.normalizer.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in model.model.params() {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::format(self.path, "truncated model file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<TrainedModel> {
    let mut c = Cursor { path, bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(CliError::format(path, "not a model file"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(CliError::format(path, format!("unsupported model version {version}")));
    }
    let mut next = || c.u32().map(|v| v as usize);
    let (width, height, channels, label_dim, n_points) = (next()?, next()?, next()?, next()?, next()?);
    let (c1, c2, hidden, n_params) = (next()?, next()?, next()?, next()?);
    let channels = match channels {
        0 => Channels::Rgb,
        1 => Channels::Rgbd,
        2 => Channels::Depth,
        other => return Err(CliError::format(path, format!("unknown channel code {other}"))),
    };
    let config = ModelConfig {
        input_width: width,
        input_height: height,
        channels,
        conv_channels: [c1, c2],
        dense_hidden: hidden,
        n_points,
        label_dim,
    };
    config.validate().map_err(|e| CliError::format(path, e.to_string()))?;
    if config.param_count() != n_params {
        return Err(CliError::format(path, format!("header implies {} parameters, file says {n_params}", config.param_count())));
    }
    let d = config.output_dim();
    let mean = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let std = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
        return Err(CliError::format(path, "invalid target statistics"));
    }
    let params = (0..n_params).map(|_| c.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    if c.pos != bytes.len() {
        return Err(CliError::format(path, "trailing bytes after parameters"));
    }
    let model = Model::from_params(config, params).map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(TrainedModel { model, normalizer: TargetNormalizer { mean, std } })
}

/// Rounds parameters to `f32`, matching what [`save`] stores.
pub fn round_params(model: &mut TrainedModel) {
    for p in model.model.params_mut() {
        *p = f64::from(*p as f32);
    }
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    write_bytes(path, &encode(model))
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    decode(path, &read_bytes(path)?)
}
