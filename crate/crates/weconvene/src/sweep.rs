//! Rate-distortion sweeps.
//!
//! Every image in a directory is coded at every rate point of every
//! configuration, decoded again and scored. Rows are ordered by
//! configuration, rate point and file name regardless of how many threads
//! did the work.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use weconvene_core::Tensor;

use crate::codec::{decode, encode_image, ClassicalOptions, EncodeMode, NeuralCodec};
use crate::image_io::read_rgb;
use crate::metrics::{bd_rate, ms_ssim, psnr, RdPoint};
use crate::{CodecError, Result};

/// Minimum rate points per configuration.
pub const MIN_RATE_POINTS: usize = 4;

#[derive(Debug, Clone)]
pub enum RatePoint {
    Classical(ClassicalOptions),
    Neural(Arc<NeuralCodec>),
}

impl RatePoint {
    pub fn label(&self) -> String {
        match self {
            RatePoint::Classical(o) => format!("q{}", o.qstep),
            RatePoint::Neural(c) => format!("lambda{}", c.manifest().config.lambda_index),
        }
    }

    fn mode(&self) -> EncodeMode<'_> {
        match self {
            RatePoint::Classical(o) => EncodeMode::Classical(*o),
            RatePoint::Neural(c) => EncodeMode::Neural(c),
        }
    }

    fn codec(&self) -> Option<&NeuralCodec> {
        match self {
            RatePoint::Classical(_) => None,
            RatePoint::Neural(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub name: String,
    pub points: Vec<RatePoint>,
}

impl SweepConfig {
    pub fn classical(name: impl Into<String>, base: ClassicalOptions, qsteps: &[f32]) -> Self {
        SweepConfig {
            name: name.into(),
            points: qsteps
                .iter()
                .map(|&qstep| RatePoint::Classical(ClassicalOptions { qstep, ..base }))
                .collect(),
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: String,
    pub image: String,
    pub bpp: f64,
    pub psnr_db: f64,
    pub msssim: f64,
    pub est_bits: f64,
    pub actual_bits: u64,
}

impl SweepRow {
    /// `|actual - estimated| / estimated`.
    pub fn rate_gap(&self) -> f64 {
        (self.actual_bits as f64 - self.est_bits).abs() / self.est_bits.max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per configuration, the image-averaged point at each rate.
    pub curves: Vec<(String, Vec<RdPoint>)>,
    /// BD-rate of each configuration against the reference, when requested.
    pub bd_rates: Vec<(String, f64)>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CodecError::io("<csv>", e))
    }

    pub fn max_rate_gap(&self) -> f64 {
        self.rows.iter().map(SweepRow::rate_gap).fold(0.0, f64::max)
    }
}

fn csv_err(e: csv::Error) -> CodecError {
    CodecError::InvalidArgument(format!("CSV: {e}"))
}

/// PNG and PPM files in `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CodecError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| ["png", "ppm"].contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if out.is_empty() {
        return Err(CodecError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no PNG or PPM images"),
        ));
    }
    Ok(out)
}

fn score(pixels: &Tensor, point: &RatePoint) -> Result<(f64, f64, f64, f64, u64)> {
    let enc = encode_image(pixels, point.mode())?;
    let rec = decode(&enc.bytes, point.codec())?;
    Ok((
        enc.bpp(),
        psnr(pixels, &rec)?,
        ms_ssim(pixels, &rec)?,
        enc.rate.estimated_bits(),
        enc.rate.actual_bits(),
    ))
}

/// Runs every configuration over every image in `image_dir`.
pub fn rd_sweep(image_dir: impl AsRef<Path>, configs: &[SweepConfig], reference: Option<&str>) -> Result<SweepReport> {
    for c in configs {
        if c.points.len() < MIN_RATE_POINTS {
            return Err(CodecError::InvalidArgument(format!(
                "config {:?} has {} rate points, need at least {MIN_RATE_POINTS}",
                c.name,
                c.points.len()
            )));
        }
    }
    let paths = list_images(image_dir)?;
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let images: Vec<Tensor> = paths.par_iter().map(read_rgb).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for cfg in configs {
        let mut curve = Vec::with_capacity(cfg.points.len());
        for point in &cfg.points {
            let scores: Vec<_> = images.par_iter().map(|img| score(img, point)).collect::<Result<_>>()?;
            let label = format!("{}/{}", cfg.name, point.label());
            let n = scores.len() as f64;
            let mut avg = RdPoint {
                bpp: 0.0,
                psnr_db: 0.0,
                msssim: 0.0,
            };
            for (name, &(bpp, psnr_db, msssim, est_bits, actual_bits)) in names.iter().zip(&scores) {
                avg.bpp += bpp / n;
                avg.psnr_db += psnr_db / n;
                avg.msssim += msssim / n;
                rows.push(SweepRow {
                    config: label.clone(),
                    image: name.clone(),
                    bpp,
                    psnr_db,
                    msssim,
                    est_bits,
                    actual_bits,
                });
            }
            curve.push(avg);
        }
        curves.push((cfg.name.clone(), curve));
    }

    let mut bd_rates = Vec::new();
    if let Some(r) = reference {
        let base = &curves
            .iter()
            .find(|(n, _)| n == r)
            .ok_or_else(|| CodecError::InvalidArgument(format!("no config named {r:?}")))?
            .1;
        for (name, curve) in &curves {
            bd_rates.push((name.clone(), bd_rate(base, curve)?));
        }
    }
    Ok(SweepReport { rows, curves, bd_rates })
}
