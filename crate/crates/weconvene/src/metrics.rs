//! Image quality and rate-distortion metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use weconvene_core::{Error, Tensor};

use crate::Result;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WIN_SIZE: usize = 11;
const WIN_SIGMA: f64 = 1.5;
const DATA_RANGE: f64 = 255.0;
/// Smallest side accepted by [`ms_ssim`].
pub const MS_SSIM_MIN_SIDE: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr_db: f64,
    pub msssim: f64,
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())).into());
    }
    Ok(())
}

/// Mean squared error over all channels and pixels.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.data().len().max(1) as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / n)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (DATA_RANGE * DATA_RANGE / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR in dB for 8-bit images, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    fn from(t: &Tensor, c: usize) -> Plane {
        Plane {
            h: t.height(),
            w: t.width(),
            v: t.plane(c).iter().map(|&x| x as f64).collect(),
        }
    }

    fn zip(&self, o: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            v: self.v.iter().zip(&o.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    // Separable valid-mode filter; a dimension shorter than the window is
    // left unfiltered.
    fn gaussian(&self, win: &[f64]) -> Plane {
        let k = win.len();
        let mut p = Plane {
            h: self.h,
            w: self.w,
            v: self.v.clone(),
        };
        if p.w >= k {
            let w = p.w - k + 1;
            let mut v = Vec::with_capacity(p.h * w);
            for y in 0..p.h {
                let row = &p.v[y * p.w..(y + 1) * p.w];
                v.extend((0..w).map(|x| win.iter().zip(&row[x..x + k]).map(|(g, r)| g * r).sum::<f64>()));
            }
            p = Plane { h: p.h, w, v };
        }
        if p.h >= k {
            let h = p.h - k + 1;
            let mut v = vec![0.0; h * p.w];
            for y in 0..h {
                for (j, g) in win.iter().enumerate() {
                    let src = &p.v[(y + j) * p.w..(y + j + 1) * p.w];
                    for (d, s) in v[y * p.w..(y + 1) * p.w].iter_mut().zip(src) {
                        *d += g * s;
                    }
                }
            }
            p = Plane { h, w: p.w, v };
        }
        p
    }

    // 2×2 average pooling; an odd dimension is zero-padded by one on each
    // side and the padding counts towards the average.
    fn downsample(&self) -> Plane {
        let (ph, pw) = (self.h % 2, self.w % 2);
        let (h, w) = ((self.h + 2 * ph - 2) / 2 + 1, (self.w + 2 * pw - 2) / 2 + 1);
        let get = |y: isize, x: isize| {
            if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
                0.0
            } else {
                self.v[y as usize * self.w + x as usize]
            }
        };
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (y0, x0) = (2 * y as isize - ph as isize, 2 * x as isize - pw as isize);
                v.push((get(y0, x0) + get(y0, x0 + 1) + get(y0 + 1, x0) + get(y0 + 1, x0 + 1)) / 4.0);
            }
        }
        Plane { h, w, v }
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (WIN_SIZE / 2) as f64;
    let g: Vec<f64> = (0..WIN_SIZE)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * WIN_SIGMA * WIN_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM and mean contrast-structure term of one plane pair.
fn ssim_cs(x: &Plane, y: &Plane, win: &[f64]) -> (f64, f64) {
    let c1 = (0.01 * DATA_RANGE).powi(2);
    let c2 = (0.03 * DATA_RANGE).powi(2);
    let mu1 = x.gaussian(win);
    let mu2 = y.gaussian(win);
    let xx = x.zip(x, |a, b| a * b).gaussian(win);
    let yy = y.zip(y, |a, b| a * b).gaussian(win);
    let xy = x.zip(y, |a, b| a * b).gaussian(win);
    let n = mu1.v.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu1.v.len() {
        let (m1, m2) = (mu1.v[i], mu2.v[i]);
        let s1 = xx.v[i] - m1 * m1;
        let s2 = yy.v[i] - m2 * m2;
        let s12 = xy.v[i] - m1 * m2;
        let c = (2.0 * s12 + c2) / (s1 + s2 + c2);
        cs += c;
        ssim += c * (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
    }
    (ssim / n, cs / n)
}

/// Five-scale MS-SSIM of two 8-bit images, averaged over channels.
pub fn ms_ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_shape(a, b)?;
    let (c, h, w) = a.shape();
    if h.min(w) < MS_SSIM_MIN_SIDE || c == 0 {
        return Err(
            Error::DegenerateInput(format!("MS-SSIM needs both sides >= {MS_SSIM_MIN_SIDE}, got {h}x{w}")).into(),
        );
    }
    let win = gaussian_window();
    let mut total = 0.0;
    for ch in 0..c {
        let (mut x, mut y) = (Plane::from(a, ch), Plane::from(b, ch));
        let mut value = 1.0;
        for (level, &weight) in MS_SSIM_WEIGHTS.iter().enumerate() {
            let (ssim, cs) = ssim_cs(&x, &y, &win);
            if level + 1 < MS_SSIM_WEIGHTS.len() {
                value *= cs.max(0.0).powf(weight);
                x = x.downsample();
                y = y.downsample();
            } else {
                value *= ssim.max(0.0).powf(weight);
            }
        }
        total += value;
    }
    Ok(total / c as f64)
}

/// Least-squares cubic `ln(bpp) ≈ p(t)` with `t = (psnr - center) / scale`.
fn fit_log_rate(curve: &[RdPoint], center: f64, scale: f64) -> Result<[f64; 4]> {
    let n = curve.len();
    let a = DMatrix::from_fn(n, 4, |i, j| ((curve[i].psnr_db - center) / scale).powi(j as i32));
    let b = DVector::from_fn(n, |i, _| curve[i].bpp.ln());
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::NumericalError(e.to_string()))?;
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

fn integrate_cubic(p: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim = |t: f64| p[0] * t + p[1] * t * t / 2.0 + p[2] * t.powi(3) / 3.0 + p[3] * t.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

/// Bjøntegaard delta rate of `b` against `a`, in percent.
///
/// Fits `ln(bpp)` as a cubic in PSNR for each curve, integrates both over
/// the common PSNR interval and converts the mean log-rate difference to a
/// percentage. Negative values mean `b` needs fewer bits.
pub fn bd_rate(a: &[RdPoint], b: &[RdPoint]) -> Result<f64> {
    for (name, c) in [("a", a), ("b", b)] {
        if c.len() < 4 {
            return Err(Error::DegenerateInput(format!("curve {name} has {} points, need 4", c.len())).into());
        }
        if c.iter()
            .any(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.psnr_db.is_finite()))
        {
            return Err(Error::DegenerateInput(format!("curve {name} has a non-positive or non-finite point")).into());
        }
    }
    let range = |c: &[RdPoint]| {
        c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.psnr_db), hi.max(p.psnr_db))
        })
    };
    let (a_lo, a_hi) = range(a);
    let (b_lo, b_hi) = range(b);
    let (lo, hi) = (a_lo.max(b_lo), a_hi.min(b_hi));
    if hi <= lo {
        return Err(Error::DegenerateInput(format!(
            "PSNR ranges [{a_lo}, {a_hi}] and [{b_lo}, {b_hi}] do not overlap"
        ))
        .into());
    }
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let pa = fit_log_rate(a, center, scale)?;
    let pb = fit_log_rate(b, center, scale)?;
    let diff = (integrate_cubic(&pb, -1.0, 1.0) - integrate_cubic(&pa, -1.0, 1.0)) / 2.0;
    Ok((diff.exp() - 1.0) * 100.0)
}
