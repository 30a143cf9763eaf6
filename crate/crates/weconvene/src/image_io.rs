//! 8-bit RGB PNG/PPM reading and writing.

use std::path::Path;

use image::{ColorType, ImageFormat, RgbImage};
use weconvene_core::Tensor;

use crate::{CodecError, Result};

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm" | "pnm") => Ok(ImageFormat::Pnm),
        _ => Err(CodecError::ImageFormat {
            path: path.into(),
            msg: "expected a .png or .ppm file".into(),
        }),
    }
}

/// Reads an 8-bit RGB image as a `3×H×W` tensor of values in `[0, 255]`.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| CodecError::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| CodecError::ImageFormat {
        path: path.into(),
        msg: e.to_string(),
    })?;
    if img.color() != ColorType::Rgb8 {
        return Err(CodecError::ImageFormat {
            path: path.into(),
            msg: format!("expected 8-bit RGB, found {:?}", img.color()),
        });
    }
    Ok(rgb_to_tensor(&img.into_rgb8()))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(c, y as usize, x as usize, p[c] as f32);
        }
    }
    t
}

/// Rounds and clamps a `3×H×W` tensor into an RGB image.
pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    if t.channels() != 3 {
        return Err(CodecError::Core(weconvene_core::Error::ShapeMismatch(format!(
            "RGB output needs 3 channels, got {}",
            t.channels()
        ))));
    }
    Ok(RgbImage::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        image::Rgb(std::array::from_fn(|c| {
            t.at(c, y as usize, x as usize).round().clamp(0.0, 255.0) as u8
        }))
    }))
}

pub fn write_rgb(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    tensor_to_rgb(t)?.save_with_format(path, format).map_err(|e| match e {
        image::ImageError::IoError(io) => CodecError::io(path, io),
        other => CodecError::ImageFormat {
            path: path.into(),
            msg: other.to_string(),
        },
    })
}
