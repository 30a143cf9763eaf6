//! Single-level lifting wavelet transforms (Haar, CDF 5/3, CDF 9/7).
//!
//! Conventions:
//! - even-indexed samples feed the low band, so a length-`n` signal splits
//!   into `ceil(n/2)` low and `floor(n/2)` high coefficients;
//! - 5/3 and 9/7 use whole-sample symmetric extension, which in the lifting
//!   domain reduces to clamping the neighbour index at either end;
//! - Haar is the orthonormal 2-tap pair; an unpaired trailing sample passes
//!   to the low band unchanged, so the transform stays orthonormal for odd
//!   lengths too;
//! - lifting runs in double precision; inputs and outputs are `f32`;
//! - 2-D transforms run along rows (x) first, then along columns (y).
//!   `hl` is high-pass along x and low-pass along y, `lh` is low-pass along x
//!   and high-pass along y.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use crate::error::shape_err;
use crate::{Error, Result, Tensor};

const CDF53_PREDICT: f64 = -0.5;
const CDF53_UPDATE: f64 = 0.25;

const CDF97_ALPHA: f64 = -1.586_134_342;
const CDF97_BETA: f64 = -0.052_980_118;
const CDF97_GAMMA: f64 = 0.882_911_076;
const CDF97_DELTA: f64 = 0.443_506_852;
const CDF97_K: f64 = 1.230_174_104_914;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveletKind {
    Haar,
    Cdf53,
    Cdf97,
}

impl WaveletKind {
    pub const ALL: [WaveletKind; 3] = [WaveletKind::Haar, WaveletKind::Cdf53, WaveletKind::Cdf97];

    /// One-byte wire code used by the bitstream header and model manifests.
    pub fn code(self) -> u8 {
        match self {
            WaveletKind::Haar => 0,
            WaveletKind::Cdf53 => 1,
            WaveletKind::Cdf97 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(WaveletKind::Haar),
            1 => Some(WaveletKind::Cdf53),
            2 => Some(WaveletKind::Cdf97),
            _ => None,
        }
    }

    pub fn extension(self) -> ExtensionMode {
        match self {
            WaveletKind::Haar => ExtensionMode::HalfSampleSymmetric,
            WaveletKind::Cdf53 | WaveletKind::Cdf97 => ExtensionMode::WholeSampleSymmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionMode {
    /// `... x2 x1 | x0 x1 x2 ...`
    WholeSampleSymmetric,
    /// `... x1 x0 | x0 x1 ...`
    HalfSampleSymmetric,
}

/// Mirrors `signal` by `left` samples before and `right` samples after.
///
/// Only a single reflection is supported: at most `n - 1` samples per side
/// for whole-sample and `n` for half-sample symmetry.
pub fn symmetric_extend<T: Copy>(signal: &[T], left: usize, right: usize, mode: ExtensionMode) -> Result<Vec<T>> {
    let n = signal.len();
    if n < 2 {
        return Err(Error::DegenerateInput(alloc::format!(
            "cannot extend a length-{n} signal"
        )));
    }
    let limit = match mode {
        ExtensionMode::WholeSampleSymmetric => n - 1,
        ExtensionMode::HalfSampleSymmetric => n,
    };
    if left > limit || right > limit {
        return Err(Error::DegenerateInput(alloc::format!(
            "extension ({left}, {right}) exceeds one mirror period of a length-{n} signal"
        )));
    }
    let n = n as isize;
    let reflect = |i: isize| -> usize {
        let j = match mode {
            ExtensionMode::WholeSampleSymmetric => {
                if i < 0 {
                    -i
                } else if i >= n {
                    2 * (n - 1) - i
                } else {
                    i
                }
            }
            ExtensionMode::HalfSampleSymmetric => {
                if i < 0 {
                    -i - 1
                } else if i >= n {
                    2 * n - 1 - i
                } else {
                    i
                }
            }
        };
        j as usize
    };
    Ok((-(left as isize)..n + right as isize)
        .map(|i| signal[reflect(i)])
        .collect())
}

// d[i] += a * (s[i] + s[i + 1]), with s[ns] mirrored onto s[ns - 1].
fn predict(d: &mut [f64], s: &[f64], a: f64) {
    let last = s.len() - 1;
    for (i, v) in d.iter_mut().enumerate() {
        *v += a * (s[i] + s[(i + 1).min(last)]);
    }
}

// s[i] += b * (d[i - 1] + d[i]), with d[-1] -> d[0] and d[nd] -> d[nd - 1].
fn update(s: &mut [f64], d: &[f64], b: f64) {
    let last = d.len() - 1;
    for (i, v) in s.iter_mut().enumerate() {
        let l = d[i.saturating_sub(1).min(last)];
        let r = d[i.min(last)];
        *v += b * (l + r);
    }
}

fn lift_forward(s: &mut [f64], d: &mut [f64], kind: WaveletKind) {
    match kind {
        WaveletKind::Haar => {
            for (i, hi) in d.iter_mut().enumerate() {
                let (a, b) = (s[i], *hi);
                s[i] = (a + b) * FRAC_1_SQRT_2;
                *hi = (a - b) * FRAC_1_SQRT_2;
            }
        }
        WaveletKind::Cdf53 => {
            predict(d, s, CDF53_PREDICT);
            update(s, d, CDF53_UPDATE);
        }
        WaveletKind::Cdf97 => {
            predict(d, s, CDF97_ALPHA);
            update(s, d, CDF97_BETA);
            predict(d, s, CDF97_GAMMA);
            update(s, d, CDF97_DELTA);
            for v in s.iter_mut() {
                *v /= CDF97_K;
            }
            for v in d.iter_mut() {
                *v *= CDF97_K;
            }
        }
    }
}

fn lift_inverse(s: &mut [f64], d: &mut [f64], kind: WaveletKind) {
    match kind {
        WaveletKind::Haar => {
            for (i, hi) in d.iter_mut().enumerate() {
                let (l, h) = (s[i], *hi);
                s[i] = (l + h) * FRAC_1_SQRT_2;
                *hi = (l - h) * FRAC_1_SQRT_2;
            }
        }
        WaveletKind::Cdf53 => {
            update(s, d, -CDF53_UPDATE);
            predict(d, s, -CDF53_PREDICT);
        }
        WaveletKind::Cdf97 => {
            for v in s.iter_mut() {
                *v *= CDF97_K;
            }
            for v in d.iter_mut() {
                *v /= CDF97_K;
            }
            update(s, d, -CDF97_DELTA);
            predict(d, s, -CDF97_GAMMA);
            update(s, d, -CDF97_BETA);
            predict(d, s, -CDF97_ALPHA);
        }
    }
}

// In-place 1-D transform on a strided lane using caller-provided scratch.
fn forward_lane(
    data: &mut [f32],
    offset: usize,
    stride: usize,
    n: usize,
    kind: WaveletKind,
    s: &mut Vec<f64>,
    d: &mut Vec<f64>,
) {
    s.clear();
    d.clear();
    for i in 0..n {
        let v = data[offset + i * stride] as f64;
        if i % 2 == 0 {
            s.push(v);
        } else {
            d.push(v);
        }
    }
    lift_forward(s, d, kind);
    for (i, v) in s.iter().chain(d.iter()).enumerate() {
        data[offset + i * stride] = *v as f32;
    }
}

fn inverse_lane(
    data: &mut [f32],
    offset: usize,
    stride: usize,
    n: usize,
    kind: WaveletKind,
    s: &mut Vec<f64>,
    d: &mut Vec<f64>,
) {
    let ns = n.div_ceil(2);
    s.clear();
    d.clear();
    for i in 0..n {
        let v = data[offset + i * stride] as f64;
        if i < ns {
            s.push(v);
        } else {
            d.push(v);
        }
    }
    lift_inverse(s, d, kind);
    for i in 0..n {
        data[offset + i * stride] = if i % 2 == 0 { s[i / 2] } else { d[i / 2] } as f32;
    }
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Forward 1-D transform: returns `(low, high)`.
pub fn dwt1d(signal: &[f32], kind: WaveletKind) -> Result<(Vec<f32>, Vec<f32>)> {
    if signal.len() < 2 {
        return Err(Error::DegenerateInput(alloc::format!(
            "dwt1d needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    let mut s: Vec<f64> = signal.iter().step_by(2).map(|&v| v as f64).collect();
    let mut d: Vec<f64> = signal.iter().skip(1).step_by(2).map(|&v| v as f64).collect();
    lift_forward(&mut s, &mut d, kind);
    Ok((narrow(&s), narrow(&d)))
}

pub fn idwt1d(low: &[f32], high: &[f32], kind: WaveletKind) -> Result<Vec<f32>> {
    if high.is_empty() || low.len() < high.len() || low.len() - high.len() > 1 {
        return Err(shape_err!("idwt1d band lengths {} / {}", low.len(), high.len()));
    }
    let mut s: Vec<f64> = low.iter().map(|&v| v as f64).collect();
    let mut d: Vec<f64> = high.iter().map(|&v| v as f64).collect();
    lift_inverse(&mut s, &mut d, kind);
    let mut out = Vec::with_capacity(s.len() + d.len());
    for i in 0..s.len() {
        out.push(s[i] as f32);
        if i < d.len() {
            out.push(d[i] as f32);
        }
    }
    Ok(out)
}

/// The four subbands of a single-level 2-D transform.
///
/// Every band is stored at `C x ceil(H/2) x ceil(W/2)`. For odd source sizes
/// the high-pass bands carry one row and/or column of zero padding that the
/// inverse ignores.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub ll: Tensor,
    pub hl: Tensor,
    pub lh: Tensor,
    pub hh: Tensor,
    pub wavelet: WaveletKind,
    pub src_h: usize,
    pub src_w: usize,
}

impl SubbandSet {
    pub fn band_shape(channels: usize, src_h: usize, src_w: usize) -> (usize, usize, usize) {
        (channels, src_h.div_ceil(2), src_w.div_ceil(2))
    }

    pub fn zeros(channels: usize, src_h: usize, src_w: usize, wavelet: WaveletKind) -> Self {
        let (c, h, w) = Self::band_shape(channels, src_h, src_w);
        SubbandSet {
            ll: Tensor::zeros(c, h, w),
            hl: Tensor::zeros(c, h, w),
            lh: Tensor::zeros(c, h, w),
            hh: Tensor::zeros(c, h, w),
            wavelet,
            src_h,
            src_w,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.src_h < 2 || self.src_w < 2 {
            return Err(Error::DegenerateInput(alloc::format!(
                "subband source {}x{}",
                self.src_h,
                self.src_w
            )));
        }
        let want = Self::band_shape(self.ll.channels(), self.src_h, self.src_w);
        for band in [&self.ll, &self.hl, &self.lh, &self.hh] {
            if band.shape() != want {
                return Err(shape_err!("subband {:?}, expected {:?}", band.shape(), want));
            }
        }
        Ok(())
    }
}

/// Separable 2-D transform of every channel of `x`.
pub fn dwt2d(x: &Tensor, kind: WaveletKind) -> Result<SubbandSet> {
    let (c, h, w) = x.shape();
    if h < 2 || w < 2 {
        return Err(Error::DegenerateInput(alloc::format!(
            "dwt2d needs at least 2x2, got {h}x{w}"
        )));
    }
    let (hw_low, ww_low) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = SubbandSet::zeros(c, h, w, kind);
    let mut plane = vec![0.0f32; h * w];
    let (mut s, mut d) = (Vec::with_capacity(h.max(w)), Vec::with_capacity(h.max(w)));
    for ch in 0..c {
        plane.copy_from_slice(x.plane(ch));
        for y in 0..h {
            forward_lane(&mut plane, y * w, 1, w, kind, &mut s, &mut d);
        }
        for col in 0..w {
            forward_lane(&mut plane, col, w, h, kind, &mut s, &mut d);
        }
        for y in 0..h {
            for col in 0..w {
                let v = plane[y * w + col];
                let (band, by, bx) = match (y < hw_low, col < ww_low) {
                    (true, true) => (&mut out.ll, y, col),
                    (true, false) => (&mut out.hl, y, col - ww_low),
                    (false, true) => (&mut out.lh, y - hw_low, col),
                    (false, false) => (&mut out.hh, y - hw_low, col - ww_low),
                };
                band.set(ch, by, bx, v);
            }
        }
    }
    Ok(out)
}

/// Exact separable inverse of [`dwt2d`]; output is `C x src_h x src_w`.
pub fn idwt2d(bands: &SubbandSet) -> Result<Tensor> {
    bands.validate()?;
    let (h, w) = (bands.src_h, bands.src_w);
    let (hw_low, ww_low) = (h.div_ceil(2), w.div_ceil(2));
    let c = bands.ll.channels();
    let mut out = Tensor::zeros(c, h, w);
    let (mut s, mut d) = (Vec::with_capacity(h.max(w)), Vec::with_capacity(h.max(w)));
    for ch in 0..c {
        let plane = out.plane_mut(ch);
        for y in 0..h {
            for col in 0..w {
                plane[y * w + col] = match (y < hw_low, col < ww_low) {
                    (true, true) => bands.ll.at(ch, y, col),
                    (true, false) => bands.hl.at(ch, y, col - ww_low),
                    (false, true) => bands.lh.at(ch, y - hw_low, col),
                    (false, false) => bands.hh.at(ch, y - hw_low, col - ww_low),
                };
            }
        }
        for col in 0..w {
            inverse_lane(plane, col, w, h, bands.wavelet, &mut s, &mut d);
        }
        for y in 0..h {
            inverse_lane(plane, y * w, 1, w, bands.wavelet, &mut s, &mut d);
        }
    }
    Ok(out)
}
