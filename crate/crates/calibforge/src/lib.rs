//! File formats, dataset export and the `calibforge` command line on top of
//! [`calibforge_core`].
//!
//! - [`config`]: the flat TOML pipeline configuration and stage seeds.
//! - [`formats`]: JSON pose, pose-pair, annotation, calibration and manifest records.
//! - [`image_io`]: PFM depth and PPM color images.
//! - [`model_io`]: the binary model file.
//! - [`commands`]: one function per subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod image_io;
pub mod model_io;

pub use error::{CliError, Result};
