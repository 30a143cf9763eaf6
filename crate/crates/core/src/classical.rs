//! Weight-free wavelet codec coding LF before HF.
//!
//! Pixels are level-shifted by -128 and decomposed with `levels` single-level
//! transforms applied to the running LL band. Coefficients are quantized
//! uniformly, `q = round(c / qstep)`, and each subband of each channel is
//! coded under `N(0, sigma)` with `sigma` the RMS of its symbols. The LF
//! stream holds the coarsest LL of every channel; the HF stream holds, from
//! coarsest to finest level, HL, LH and HH of every channel.

use alloc::vec::Vec;

use crate::entropy::{decode_plane, estimate_rate, round_half_away, SymbolPlane, SIGMA_MIN};
use crate::wavelet::{dwt2d, idwt2d};
use crate::{Error, Result, SubbandSet, Tensor, WaveletKind};

/// Symbol range for classical coefficients.
pub const CLASSICAL_BOUND: i32 = 1 << 20;
pub const DEFAULT_LEVELS: usize = 3;
const LEVEL_SHIFT: f32 = 128.0;

/// Quantized multi-level decomposition; `levels[0]` is the finest.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPyramid {
    pub wavelet: WaveletKind,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub qstep: f32,
    /// Coarsest LL, `channels x h x w`, channel-major.
    pub ll: Vec<i32>,
    /// Per level (finest first): HL, LH, HH.
    pub hf: Vec<[Vec<i32>; 3]>,
}

/// Band dimensions (`src_h`, `src_w`, band `h`, band `w`) per level, finest first.
fn level_dims(height: usize, width: usize, levels: usize) -> Vec<(usize, usize, usize, usize)> {
    let (mut h, mut w) = (height, width);
    (0..levels)
        .map(|_| {
            let d = (h, w, h.div_ceil(2), w.div_ceil(2));
            (h, w) = (d.2, d.3);
            d
        })
        .collect()
}

fn check_params(c: usize, h: usize, w: usize, levels: usize, qstep: f32) -> Result<()> {
    if levels == 0 || levels > 16 {
        return Err(Error::DegenerateInput(alloc::format!("{levels} decomposition levels")));
    }
    if !(qstep > 0.0 && qstep.is_finite()) {
        return Err(Error::DegenerateInput(alloc::format!("quantizer step {qstep}")));
    }
    let min = 1usize << levels;
    if c == 0 || h < min || w < min {
        return Err(Error::DegenerateInput(alloc::format!(
            "{h}x{w} image is smaller than {min}x{min} needed for {levels} levels"
        )));
    }
    Ok(())
}

fn quantize_band(t: &Tensor, qstep: f32) -> Vec<i32> {
    let bound = CLASSICAL_BOUND as f32;
    t.data()
        .iter()
        .map(|&v| round_half_away(v / qstep).clamp(-bound, bound) as i32)
        .collect()
}

/// Level-shifts, transforms and quantizes a `C x H x W` image of pixel
/// values.
pub fn quantize_pyramid(image: &Tensor, wavelet: WaveletKind, levels: usize, qstep: f32) -> Result<QuantizedPyramid> {
    let (c, h, w) = image.shape();
    check_params(c, h, w, levels, qstep)?;
    if !image.is_finite() {
        return Err(Error::NumericalError("non-finite pixel".into()));
    }
    let mut cur = image.map(|v| v - LEVEL_SHIFT);
    let mut hf = Vec::with_capacity(levels);
    for _ in 0..levels {
        let s = dwt2d(&cur, wavelet)?;
        let (bh, bw) = (s.src_h / 2, s.src_w / 2);
        // Odd sources leave a padding row/column in the HF bands; drop it.
        let trim = |t: &Tensor, rows: usize, cols: usize| -> Result<Tensor> { t.crop(rows, cols) };
        hf.push([
            quantize_band(&trim(&s.hl, s.ll.height(), bw)?, qstep),
            quantize_band(&trim(&s.lh, bh, s.ll.width())?, qstep),
            quantize_band(&trim(&s.hh, bh, bw)?, qstep),
        ]);
        cur = s.ll;
    }
    Ok(QuantizedPyramid {
        wavelet,
        channels: c,
        height: h,
        width: w,
        qstep,
        ll: quantize_band(&cur, qstep),
        hf,
    })
}

fn band_tensor(q: &[i32], c: usize, h: usize, w: usize, full_h: usize, full_w: usize, qstep: f32) -> Result<Tensor> {
    let t = Tensor::from_vec(c, h, w, q.iter().map(|&v| v as f32 * qstep).collect())?;
    if (h, w) == (full_h, full_w) {
        return Ok(t);
    }
    let mut out = Tensor::zeros(c, full_h, full_w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.set(ch, y, x, t.at(ch, y, x));
            }
        }
    }
    Ok(out)
}

impl QuantizedPyramid {
    pub fn levels(&self) -> usize {
        self.hf.len()
    }

    /// Dequantizes and inverts the transform; returns unrounded pixel values.
    pub fn reconstruct(&self) -> Result<Tensor> {
        let dims = level_dims(self.height, self.width, self.levels());
        let c = self.channels;
        let (_, _, lh0, lw0) = *dims.last().unwrap();
        let mut cur = band_tensor(&self.ll, c, lh0, lw0, lh0, lw0, self.qstep)?;
        for (lvl, &(sh, sw, bh, bw)) in dims.iter().enumerate().rev() {
            let [hl, lh, hh] = &self.hf[lvl];
            let q = self.qstep;
            let bands = SubbandSet {
                ll: cur,
                hl: band_tensor(hl, c, bh, sw / 2, bh, bw, q)?,
                lh: band_tensor(lh, c, sh / 2, bw, bh, bw, q)?,
                hh: band_tensor(hh, c, sh / 2, sw / 2, bh, bw, q)?,
                wavelet: self.wavelet,
                src_h: sh,
                src_w: sw,
            };
            cur = idwt2d(&bands)?;
        }
        Ok(cur.map(|v| v + LEVEL_SHIFT))
    }

    /// Symbol groups in coding order with their sigma slot: first the LL of
    /// each channel, then per level coarse to fine HL, LH, HH of each channel.
    fn groups(&self) -> Vec<(bool, &[i32])> {
        let c = self.channels;
        let mut out = Vec::new();
        let per = self.ll.len() / c;
        for ch in 0..c {
            out.push((true, &self.ll[ch * per..(ch + 1) * per]));
        }
        for bands in self.hf.iter().rev() {
            for band in bands {
                let per = band.len() / c;
                for ch in 0..c {
                    out.push((false, &band[ch * per..(ch + 1) * per]));
                }
            }
        }
        out
    }

    /// Sigma table in coding order: `channels` LL entries, then
    /// `3 * channels` per level from coarse to fine.
    pub fn sigmas(&self) -> Vec<f32> {
        self.groups()
            .iter()
            .map(|(_, g)| {
                if g.is_empty() {
                    return SIGMA_MIN;
                }
                let ms = g.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / g.len() as f64;
                (libm::sqrt(ms) as f32).max(SIGMA_MIN)
            })
            .collect()
    }

    /// Fraction of quantized coefficients equal to zero.
    pub fn zero_fraction(&self) -> f64 {
        let all = self.groups();
        let n: usize = all.iter().map(|(_, g)| g.len()).sum();
        let z: usize = all.iter().map(|(_, g)| g.iter().filter(|&&v| v == 0).count()).sum();
        z as f64 / n.max(1) as f64
    }
}

/// Coded classical image.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalCoded {
    pub wavelet: WaveletKind,
    pub levels: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub qstep: f32,
    pub sigmas: Vec<f32>,
    pub lf: Vec<u8>,
    pub hf: Vec<u8>,
    pub estimated_bits_lf: f64,
    pub estimated_bits_hf: f64,
}

fn plane_for(groups: &[(bool, &[i32])], sigmas: &[f32], lf: bool) -> Result<SymbolPlane> {
    let mut symbols = Vec::new();
    let mut sigma = Vec::new();
    for ((is_lf, g), &s) in groups.iter().zip(sigmas) {
        if *is_lf == lf {
            symbols.extend_from_slice(g);
            sigma.resize(symbols.len(), s);
        }
    }
    let mu = alloc::vec![0.0; symbols.len()];
    SymbolPlane::new(symbols, mu, sigma, CLASSICAL_BOUND)
}

pub fn classical_encode(image: &Tensor, wavelet: WaveletKind, levels: usize, qstep: f32) -> Result<ClassicalCoded> {
    let pyr = quantize_pyramid(image, wavelet, levels, qstep)?;
    let sigmas = pyr.sigmas();
    let groups = pyr.groups();
    let lf = plane_for(&groups, &sigmas, true)?;
    let hf = plane_for(&groups, &sigmas, false)?;
    Ok(ClassicalCoded {
        wavelet,
        levels,
        channels: pyr.channels,
        height: pyr.height,
        width: pyr.width,
        qstep,
        lf: lf.encode()?,
        hf: hf.encode()?,
        estimated_bits_lf: estimate_rate(&lf),
        estimated_bits_hf: estimate_rate(&hf),
        sigmas,
    })
}

/// Number of symbols in each coding group, matching [`QuantizedPyramid`].
fn group_sizes(c: usize, h: usize, w: usize, levels: usize) -> (usize, Vec<usize>) {
    let dims = level_dims(h, w, levels);
    let (_, _, lh, lw) = *dims.last().unwrap();
    let hf = dims
        .iter()
        .rev()
        .flat_map(|&(sh, sw, bh, bw)| [bh * (sw / 2), (sh / 2) * bw, (sh / 2) * (sw / 2)])
        .flat_map(|n| core::iter::repeat_n(n, c))
        .collect();
    (lh * lw, hf)
}

/// Decodes the symbol streams back into a pyramid.
pub fn classical_decode_pyramid(coded: &ClassicalCoded) -> Result<QuantizedPyramid> {
    let (c, h, w, levels) = (coded.channels, coded.height, coded.width, coded.levels);
    check_params(c, h, w, levels, coded.qstep).map_err(|e| Error::DecodingError(alloc::format!("{e}")))?;
    let (ll_n, hf_sizes) = group_sizes(c, h, w, levels);
    if coded.sigmas.len() != c + hf_sizes.len() {
        return Err(Error::DecodingError(alloc::format!(
            "sigma table has {} entries, expected {}",
            coded.sigmas.len(),
            c + hf_sizes.len()
        )));
    }
    if coded.sigmas.iter().any(|s| !s.is_finite()) {
        return Err(Error::DecodingError("non-finite sigma".into()));
    }
    let expand = |sizes: &[usize], sig: &[f32]| -> Vec<f32> {
        sizes
            .iter()
            .zip(sig)
            .flat_map(|(&n, &s)| core::iter::repeat_n(s.max(SIGMA_MIN), n))
            .collect()
    };
    let ll_sigma = expand(&alloc::vec![ll_n; c], &coded.sigmas[..c]);
    let hf_sigma = expand(&hf_sizes, &coded.sigmas[c..]);
    let ll = decode_plane(&coded.lf, &alloc::vec![0.0; ll_sigma.len()], &ll_sigma, CLASSICAL_BOUND)?;
    let hf_all = decode_plane(&coded.hf, &alloc::vec![0.0; hf_sigma.len()], &hf_sigma, CLASSICAL_BOUND)?;

    // Regroup: stream order is coarse-to-fine, band, channel.
    let mut hf: Vec<[Vec<i32>; 3]> = (0..levels).map(|_| [Vec::new(), Vec::new(), Vec::new()]).collect();
    let mut pos = 0;
    let mut sizes = hf_sizes.iter();
    for lvl in (0..levels).rev() {
        for band in hf[lvl].iter_mut() {
            for _ in 0..c {
                let n = *sizes.next().unwrap();
                band.extend_from_slice(&hf_all[pos..pos + n]);
                pos += n;
            }
        }
    }
    Ok(QuantizedPyramid {
        wavelet: coded.wavelet,
        channels: c,
        height: h,
        width: w,
        qstep: coded.qstep,
        ll,
        hf,
    })
}

/// Decodes to rounded pixel values in `[0, 255]`.
pub fn classical_decode(coded: &ClassicalCoded) -> Result<Tensor> {
    let pyr = classical_decode_pyramid(coded)?;
    Ok(pyr.reconstruct()?.map(|v| libm::roundf(v).clamp(0.0, 255.0)))
}

/// Zero fraction of per-channel mean-removed pixels quantized with `qstep`.
pub fn pixel_zero_fraction(image: &Tensor, qstep: f32) -> f64 {
    let mut zeros = 0usize;
    for c in 0..image.channels() {
        let plane = image.plane(c);
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len().max(1) as f64;
        zeros += plane
            .iter()
            .filter(|&&v| round_half_away(((v as f64 - mean) / qstep as f64) as f32) == 0.0)
            .count();
    }
    zeros as f64 / image.data().len().max(1) as f64
}
