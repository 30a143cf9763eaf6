//! Rank-3 `f32` tensors (channels x height x width), row-major per plane.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::shape_err;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(shape_err!(
                "{} values for a {}x{}x{} tensor",
                data.len(),
                channels,
                height,
                width
            ));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    /// Elementwise sum; shapes must agree.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if !self.same_shape(other) {
            return Err(shape_err!("add {:?} + {:?}", self.shape(), other.shape()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor { data, ..*self })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Stacks tensors along the channel axis. All parts must share H x W.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DegenerateInput("concat of zero tensors".into()))?;
        let (h, w) = (first.height, first.width);
        let mut channels = 0;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        for p in parts {
            if p.height != h || p.width != w {
                return Err(shape_err!("concat spatial {}x{} vs {}x{}", h, w, p.height, p.width));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            channels,
            height: h,
            width: w,
            data,
        })
    }

    /// Copies out the channel range `[start, start + count)`.
    pub fn channel_range(&self, start: usize, count: usize) -> Result<Tensor> {
        if start + count > self.channels {
            return Err(shape_err!("channels {}..{} of {}", start, start + count, self.channels));
        }
        let n = self.plane_len();
        Ok(Tensor {
            channels: count,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + count) * n].to_vec(),
        })
    }

    /// Replicate-pads on the right and bottom to `height x width`.
    pub fn pad_replicate(&self, height: usize, width: usize) -> Result<Tensor> {
        if height < self.height || width < self.width || self.height == 0 || self.width == 0 {
            return Err(shape_err!(
                "cannot pad {}x{} to {}x{}",
                self.height,
                self.width,
                height,
                width
            ));
        }
        let mut out = Tensor::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for y in 0..height {
                let sy = y.min(self.height - 1);
                for x in 0..width {
                    let sx = x.min(self.width - 1);
                    out.set(c, y, x, self.at(c, sy, sx));
                }
            }
        }
        Ok(out)
    }

    /// Keeps the top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Result<Tensor> {
        if height > self.height || width > self.width {
            return Err(shape_err!(
                "cannot crop {}x{} to {}x{}",
                self.height,
                self.width,
                height,
                width
            ));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in 0..height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row..row + width]);
            }
        }
        Ok(Tensor {
            channels: self.channels,
            height,
            width,
            data,
        })
    }
}
