//! Deterministic inference primitives.
//!
//! Every output element is accumulated in a fixed `(in_channel, ky, kx)`
//! order by exactly one worker, so results do not depend on how many
//! threads the `parallel` feature hands the work to.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::shape_err;
use crate::{Error, Result, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f32 = 0.01;
pub const GDN_BETA_MIN: f32 = 1e-6;

/// Convolution weights. Kernels are laid out `[out][in][ky][kx]` for both
/// ordinary and transposed convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub transposed: bool,
}

impl ConvParams {
    pub fn new(
        kernel: Vec<f32>,
        bias: Vec<f32>,
        out_ch: usize,
        in_ch: usize,
        k: usize,
        stride: usize,
        transposed: bool,
    ) -> Result<Self> {
        if k.is_multiple_of(2) || !(stride == 1 || stride == 2) {
            return Err(Error::BadShape(alloc::format!(
                "kernel size {k} / stride {stride} unsupported"
            )));
        }
        if kernel.len() != out_ch * in_ch * k * k || bias.len() != out_ch {
            return Err(Error::BadShape(alloc::format!(
                "conv {out_ch}x{in_ch}x{k}x{k}: got {} kernel and {} bias values",
                kernel.len(),
                bias.len()
            )));
        }
        Ok(ConvParams {
            kernel,
            bias,
            out_ch,
            in_ch,
            k,
            stride,
            transposed,
        })
    }

    /// 1x1 identity mapping over `channels` channels.
    pub fn identity(channels: usize) -> Self {
        let mut kernel = vec![0.0; channels * channels];
        for c in 0..channels {
            kernel[c * channels + c] = 1.0;
        }
        ConvParams {
            kernel,
            bias: vec![0.0; channels],
            out_ch: channels,
            in_ch: channels,
            k: 1,
            stride: 1,
            transposed: false,
        }
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, stride: usize, transposed: bool) -> Self {
        ConvParams {
            kernel: vec![0.0; out_ch * in_ch * k * k],
            bias: vec![0.0; out_ch],
            out_ch,
            in_ch,
            k,
            stride,
            transposed,
        }
    }

    #[inline]
    fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.kernel[((o * self.in_ch + i) * self.k + ky) * self.k + kx]
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        if self.transposed {
            (h * self.stride, w * self.stride)
        } else {
            (h.div_ceil(self.stride), w.div_ceil(self.stride))
        }
    }
}

#[cfg(feature = "parallel")]
fn for_each_plane<F>(out: &mut Tensor, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    use rayon::prelude::*;
    let n = out.plane_len().max(1);
    out.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(c, plane)| f(c, plane));
}

#[cfg(not(feature = "parallel"))]
fn for_each_plane<F>(out: &mut Tensor, f: F)
where
    F: Fn(usize, &mut [f32]),
{
    let n = out.plane_len().max(1);
    out.data_mut()
        .chunks_mut(n)
        .enumerate()
        .for_each(|(c, plane)| f(c, plane));
}

/// 2-D cross-correlation with replicate padding of `k / 2` on every side.
///
/// Stride 1 keeps `H x W`, stride 2 yields `ceil(H/2) x ceil(W/2)`. Transposed
/// parameters are dispatched to [`conv_transpose2d`].
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    if p.transposed {
        return conv_transpose2d(x, p);
    }
    let (c, h, w) = x.shape();
    if c != p.in_ch {
        return Err(shape_err!("conv2d expects {} channels, got {}", p.in_ch, c));
    }
    if h == 0 || w == 0 {
        return Err(Error::DegenerateInput("conv2d on an empty plane".into()));
    }
    let pad = p.k / 2;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut padded = vec![0.0f32; c * ph * pw];
    for ch in 0..c {
        let src = x.plane(ch);
        let dst = &mut padded[ch * ph * pw..(ch + 1) * ph * pw];
        for y in 0..ph {
            let sy = y.saturating_sub(pad).min(h - 1);
            for xx in 0..pw {
                let sx = xx.saturating_sub(pad).min(w - 1);
                dst[y * pw + xx] = src[sy * w + sx];
            }
        }
    }
    let (oh, ow) = p.output_dims(h, w);
    let s = p.stride;
    let mut out = Tensor::zeros(p.out_ch, oh, ow);
    for_each_plane(&mut out, |o, plane| {
        plane.fill(p.bias[o]);
        for i in 0..p.in_ch {
            let src = &padded[i * ph * pw..(i + 1) * ph * pw];
            for ky in 0..p.k {
                for kx in 0..p.k {
                    let wv = p.weight(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let row = &src[(s * oy + ky) * pw + kx..];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            for (d, v) in dst.iter_mut().zip(row) {
                                *d += wv * v;
                            }
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d += wv * row[s * ox];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Transposed convolution producing exactly `stride*H x stride*W`.
///
/// Output `o` collects input `i` through tap `t` when `o = stride*i + t - k/2`.
/// Taps that would read outside the input read the replicated edge sample.
pub fn conv_transpose2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let (c, h, w) = x.shape();
    if c != p.in_ch {
        return Err(shape_err!("conv_transpose2d expects {} channels, got {}", p.in_ch, c));
    }
    if h == 0 || w == 0 {
        return Err(Error::DegenerateInput("conv_transpose2d on an empty plane".into()));
    }
    let s = p.stride as isize;
    let pad = (p.k / 2) as isize;
    let (oh, ow) = p.output_dims(h, w);
    // Source index per (tap, output position), or None when the tap skips it.
    let taps = |n_out: usize, n_in: usize| -> Vec<Vec<Option<usize>>> {
        (0..p.k as isize)
            .map(|t| {
                (0..n_out as isize)
                    .map(|o| {
                        let q = o + pad - t;
                        (q.rem_euclid(s) == 0).then(|| q.div_euclid(s).clamp(0, n_in as isize - 1) as usize)
                    })
                    .collect()
            })
            .collect()
    };
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut out = Tensor::zeros(p.out_ch, oh, ow);
    for_each_plane(&mut out, |o, plane| {
        plane.fill(p.bias[o]);
        for i in 0..p.in_ch {
            let src = x.plane(i);
            for (ky, tyk) in ty.iter().enumerate() {
                for (kx, txk) in tx.iter().enumerate() {
                    let wv = p.weight(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    for (oy, sy) in tyk.iter().enumerate() {
                        let Some(sy) = sy else { continue };
                        let row = &src[sy * w..(sy + 1) * w];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for (d, sx) in dst.iter_mut().zip(txk) {
                            if let Some(sx) = sx {
                                *d += wv * row[*sx];
                            }
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

pub fn leaky_relu(x: &Tensor, slope: f32) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn leaky_relu_inplace(x: &mut Tensor, slope: f32) {
    x.map_inplace(|v| if v >= 0.0 { v } else { slope * v });
}

/// `ln(1 + e^x)`, used to map raw network outputs to positive scales.
#[inline]
pub fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        libm::log1pf(libm::expf(x))
    }
}

/// Generalized divisive normalization parameters.
///
/// `gamma` is row-major `C x C`; row `i` weights the squared inputs that
/// normalize output channel `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GdnParams {
    pub beta: Vec<f32>,
    pub gamma: Vec<f32>,
    pub inverse: bool,
}

impl GdnParams {
    pub fn new(beta: Vec<f32>, gamma: Vec<f32>, inverse: bool) -> Result<Self> {
        let c = beta.len();
        if gamma.len() != c * c {
            return Err(Error::BadShape(alloc::format!(
                "gdn gamma has {} values for {} channels",
                gamma.len(),
                c
            )));
        }
        // Reparameterised weights can come out marginally negative; clamp
        // to the documented bounds.
        let beta = beta.into_iter().map(|b| b.max(GDN_BETA_MIN)).collect();
        let gamma = gamma.into_iter().map(|g| g.max(0.0)).collect();
        Ok(GdnParams { beta, gamma, inverse })
    }

    /// beta = 1, gamma = 0: the identity map.
    pub fn identity(channels: usize, inverse: bool) -> Self {
        GdnParams {
            beta: vec![1.0; channels],
            gamma: vec![0.0; channels * channels],
            inverse,
        }
    }

    pub fn channels(&self) -> usize {
        self.beta.len()
    }
}

/// GDN: `y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)`; with the inverse
/// flag the same norm multiplies instead (IGDN).
pub fn gdn(x: &Tensor, p: &GdnParams) -> Result<Tensor> {
    let c = x.channels();
    if p.channels() != c {
        return Err(shape_err!("gdn for {} channels, got {}", p.channels(), c));
    }
    let squares = x.map(|v| v * v);
    let mut out = Tensor::zeros(c, x.height(), x.width());
    for_each_plane(&mut out, |i, plane| {
        plane.fill(p.beta[i]);
        for j in 0..c {
            let g = p.gamma[i * c + j];
            if g == 0.0 {
                continue;
            }
            for (n, sq) in plane.iter_mut().zip(squares.plane(j)) {
                *n += g * sq;
            }
        }
        for (n, v) in plane.iter_mut().zip(x.plane(i)) {
            let norm = libm::sqrtf(*n);
            *n = if p.inverse { v * norm } else { v / norm };
        }
    });
    if !out.is_finite() {
        return Err(Error::NumericalError("non-finite GDN output".into()));
    }
    Ok(out)
}

/// `x + conv1(leaky(conv0(x)))`
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv0: ConvParams,
    pub conv1: ConvParams,
    pub slope: f32,
}

impl ResidualBlock {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if self.conv0.stride != 1
            || self.conv1.stride != 1
            || self.conv0.in_ch != x.channels()
            || self.conv1.out_ch != x.channels()
        {
            return Err(shape_err!(
                "residual block {}->{} on {} channels",
                self.conv0.in_ch,
                self.conv1.out_ch,
                x.channels()
            ));
        }
        let mut t = conv2d(x, &self.conv0)?;
        leaky_relu_inplace(&mut t, self.slope);
        let t = conv2d(&t, &self.conv1)?;
        x.add(&t)
    }
}

/// Three (or however many the weights provide) residual blocks in sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ResGroup {
    pub blocks: Vec<ResidualBlock>,
}

impl ResGroup {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        for b in &self.blocks {
            y = b.forward(&y)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, a: f32) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-a..a)).collect()
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(c, h, w, rand_vec(rng, c * h * w, 1.0)).unwrap()
    }

    fn rand_conv(rng: &mut ChaCha8Rng, o: usize, i: usize, k: usize, s: usize, t: bool) -> ConvParams {
        ConvParams::new(rand_vec(rng, o * i * k * k, 0.5), rand_vec(rng, o, 0.1), o, i, k, s, t).unwrap()
    }

    // Oracle: the textbook quadruple loop in f64, clamping indices.
    fn naive_conv(x: &Tensor, p: &ConvParams) -> Tensor {
        let (c, h, w) = x.shape();
        let pad = (p.k / 2) as isize;
        let (oh, ow) = (h.div_ceil(p.stride), w.div_ceil(p.stride));
        let mut out = Tensor::zeros(p.out_ch, oh, ow);
        for o in 0..p.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = p.bias[o] as f64;
                    for i in 0..c {
                        for ky in 0..p.k {
                            for kx in 0..p.k {
                                let iy =
                                    ((p.stride * oy) as isize + ky as isize - pad).clamp(0, h as isize - 1) as usize;
                                let ix =
                                    ((p.stride * ox) as isize + kx as isize - pad).clamp(0, w as isize - 1) as usize;
                                acc += p.weight(o, i, ky, kx) as f64 * x.at(i, iy, ix) as f64;
                            }
                        }
                    }
                    out.set(o, oy, ox, acc as f32);
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, 3, 5, 6);
        assert_eq!(conv2d(&x, &ConvParams::identity(3)).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let p = ConvParams::new(vec![1.0; 9], vec![0.0], 1, 1, 3, 1, false).unwrap();
        let y = conv2d(&Tensor::filled(1, 4, 5, 0.5), &p).unwrap();
        assert!(y.data().iter().all(|&v| (v - 4.5).abs() < 1e-6));
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&mut rng, 4, 9, 9);
        let p = rand_conv(&mut rng, 8, 4, 3, 1, false);
        assert!(conv2d(&x, &p).unwrap().max_abs_diff(&naive_conv(&x, &p)) <= 1e-5);

        for _ in 0..20 {
            let (c, o) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
            let (h, w) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
            let k = if rng.gen_bool(0.5) { 1 } else { 3 };
            let s = rng.gen_range(1..=2);
            let x = rand_tensor(&mut rng, c, h, w);
            let p = rand_conv(&mut rng, o, c, k, s, false);
            let y = conv2d(&x, &p).unwrap();
            assert_eq!(y.shape(), (o, h.div_ceil(s), w.div_ceil(s)));
            assert!(y.max_abs_diff(&naive_conv(&x, &p)) <= 1e-5);
        }
    }

    #[test]
    fn transposed_sizes_and_constancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_conv(&mut rng, 5, 2, 3, 2, true);
        let y = conv2d(&rand_tensor(&mut rng, 2, 7, 4), &p).unwrap();
        assert_eq!(y.shape(), (5, 14, 8));

        // With edge replication every output sees a full set of taps in each
        // phase, so a constant input gives a per-phase constant output.
        let p = ConvParams::new(vec![1.0; 9], vec![0.0], 1, 1, 3, 2, true).unwrap();
        let y = conv2d(&Tensor::filled(1, 3, 3, 1.0), &p).unwrap();
        for oy in 0..6 {
            for ox in 0..6 {
                let want = [1.0, 2.0][oy % 2] * [1.0, 2.0][ox % 2];
                assert_eq!(y.at(0, oy, ox), want);
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let p = ConvParams::identity(3);
        assert!(matches!(
            conv2d(&Tensor::zeros(2, 3, 3), &p),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn leaky_values() {
        let x = Tensor::from_vec(1, 1, 2, vec![2.0, -1.0]).unwrap();
        let y = leaky_relu(&x, 0.01);
        assert_eq!(y.data(), &[2.0, -0.01]);
        let pos = Tensor::from_vec(1, 1, 3, vec![0.0, 1.0, 3.5]).unwrap();
        let once = leaky_relu(&pos, 0.2);
        assert_eq!(leaky_relu(&once, 0.2), once);
    }

    #[test]
    fn gdn_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&mut rng, 3, 4, 4);
        assert_eq!(gdn(&x, &GdnParams::identity(3, false)).unwrap(), x);

        let x = Tensor::from_vec(1, 1, 1, vec![3.0]).unwrap();
        let p = GdnParams::new(vec![1.0], vec![1.0], false).unwrap();
        let y = gdn(&x, &p).unwrap();
        assert!((y.at(0, 0, 0) - 0.948_683_3).abs() < 1e-6);
    }

    #[test]
    fn igdn_undoes_gdn() {
        // The inverse is taken algebraically: the forward output is
        // re-scaled by the norm of the forward *input*.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = 6;
        let x = rand_tensor(&mut rng, c, 5, 5);
        let beta: Vec<f32> = (0..c).map(|_| rng.gen_range(0.5..1.5)).collect();
        let gamma: Vec<f32> = (0..c * c).map(|_| rng.gen_range(0.0..0.3)).collect();
        let fwd = GdnParams::new(beta.clone(), gamma.clone(), false).unwrap();
        let inv = GdnParams::new(beta, gamma, true).unwrap();
        let y = gdn(&x, &fwd).unwrap();
        let norm = gdn(&x, &inv).unwrap();
        let mut back = Tensor::zeros(c, 5, 5);
        for i in 0..back.data().len() {
            let scale = if x.data()[i] != 0.0 {
                norm.data()[i] / x.data()[i]
            } else {
                1.0
            };
            back.data_mut()[i] = y.data()[i] * scale;
        }
        assert!(back.max_abs_diff(&x) <= 1e-4);
    }

    #[test]
    fn gdn_stays_finite_with_valid_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::from_vec(2, 3, 3, rand_vec(&mut rng, 18, 1e3)).unwrap();
        let p = GdnParams::new(vec![0.0, -1.0], vec![0.0, 0.5, -0.2, 0.0], false).unwrap();
        assert!(gdn(&x, &p).unwrap().is_finite());
    }

    #[test]
    fn residual_block_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = rand_tensor(&mut rng, 4, 6, 6);
        let zero = ResidualBlock {
            conv0: ConvParams::zeros(4, 4, 3, 1, false),
            conv1: ConvParams::zeros(4, 4, 3, 1, false),
            slope: 0.01,
        };
        assert_eq!(zero.forward(&x).unwrap(), x);

        let mut b = ResidualBlock {
            conv0: rand_conv(&mut rng, 4, 4, 3, 1, false),
            conv1: rand_conv(&mut rng, 4, 4, 3, 1, false),
            slope: 0.01,
        };
        let y = b.forward(&x).unwrap();
        let t = leaky_relu(&conv2d(&x, &b.conv0).unwrap(), 0.01);
        let want = x.add(&conv2d(&t, &b.conv1).unwrap()).unwrap();
        assert_eq!(y, want);

        b.conv0.bias.fill(0.0);
        b.conv1.bias.fill(0.0);
        let z = Tensor::zeros(4, 6, 6);
        assert_eq!(b.forward(&z).unwrap(), z);
    }
}
