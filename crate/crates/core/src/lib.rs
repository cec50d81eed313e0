//! Robot-driven automatic label generation for RGBD keypoint datasets.
//!
//! The crate is `no_std` (with `alloc`) and holds the algorithmic pieces:
//!
//! - [`geometry`]: rigid transforms, rotations and pose noise.
//! - [`camera`]: pinhole projection, depth/point-cloud conversion, nearest-point search.
//! - [`calibration`]: linear `AX = YB` hand-eye calibration (QR24) and its evaluation.
//! - [`phantom`]: a ray-traced ellipsoid head phantom carried by a simulated robot.
//! - [`labeling`]: one-frame annotation lifted to the endeffector and propagated to every frame.
//! - [`metrics`]: MAE, rMAE and aCC for coordinate regression.
//! - [`regressor`]: a small trainable keypoint regressor with Adam and exact backprop.
//!
//! File formats, dataset export and the command line live in the `calibforge` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod camera;
mod error;
pub mod geometry;
pub mod labeling;
pub mod metrics;
pub mod phantom;
pub mod regressor;
pub mod rng;

pub use error::{Error, Result};
