//! File formats, codec drivers, quality metrics and the evaluation harness
//! built on top of `weconvene-core`.
//!
//! - [`manifest`]: the `WCVM` weight container and random initialisation.
//! - [`bitstream`]: the `WCVN` container.
//! - [`codec`]: neural and classical encode/decode, in memory and on disk.
//! - [`metrics`]: PSNR, MS-SSIM and Bjøntegaard delta rate.
//! - [`sweep`]: rate-distortion sweeps over a directory of images.

pub mod bitstream;
pub mod codec;
mod error;
pub mod image_io;
pub mod manifest;
pub mod metrics;
pub mod sweep;

pub use error::{CodecError, Result};
pub use weconvene_core as core;
