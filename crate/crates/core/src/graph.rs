//! The four transforms of the codec and the latent layout between them.
//!
//! ```text
//! g_a: WeConv(3->N) RG WeConv RG WeConv RG Conv(N->M, /2) DWT -> y_l, y_h
//! g_s: IDWT TConv(M->N) RG IWeConv RG IWeConv RG IWeConv(N->3)
//! h_a: Conv(4M->N) LReLU WeConv Conv(N->Z, /2)
//! h_s: TConv(Z->N) LReLU IWeConv Conv(N->8M) -> S_L scale|mean, S_H scale|mean
//! ```
//!
//! With `weconv` disabled every (I)WeConv is replaced by its stem followed by
//! (I)GDN.

use alloc::format;
use alloc::vec::Vec;

use crate::error::shape_err;
use crate::nn::{conv2d, gdn, leaky_relu_inplace, softplus, ConvParams, GdnParams, ResGroup, ResidualBlock};
use crate::wavelet::{dwt2d, idwt2d};
use crate::wecharm::{Band, SliceNet};
use crate::weconv::{iweconv_forward, weconv_forward, WeConvParams};
use crate::weights::{load_conv, load_gdn, ModelConfig, WeightSource, RES_BLOCKS};
use crate::{Error, Result, SubbandSet, Tensor};

/// Spatial reduction from image to `y_l` / `y_h`.
pub const LATENT_STRIDE: usize = 32;
/// Images are padded to a multiple of this before analysis.
pub const PAD_MULTIPLE: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        p: ConvParams,
        slope: Option<f32>,
    },
    WeConv(WeConvParams),
    /// Baseline stand-in for a WeConv: stem then (I)GDN.
    Plain {
        stem: ConvParams,
        gdn: GdnParams,
    },
    Res(ResGroup),
}

impl Layer {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv { p, slope } => {
                let mut y = conv2d(x, p)?;
                if let Some(s) = slope {
                    leaky_relu_inplace(&mut y, *s);
                }
                Ok(y)
            }
            Layer::WeConv(p) if p.stem.transposed => iweconv_forward(x, p),
            Layer::WeConv(p) => weconv_forward(x, p),
            Layer::Plain { stem, gdn: g } => gdn(&conv2d(x, stem)?, g),
            Layer::Res(g) => g.forward(x),
        }
    }
}

fn run(layers: &[Layer], x: &Tensor) -> Result<Tensor> {
    let mut y = x.clone();
    for l in layers {
        y = l.forward(&y)?;
    }
    Ok(y)
}

struct Loader<'a> {
    w: &'a dyn WeightSource,
    cfg: &'a ModelConfig,
}

impl Loader<'_> {
    fn conv(&self, p: &str, in_ch: usize, out_ch: usize, stride: usize, transposed: bool) -> Result<ConvParams> {
        load_conv(self.w, p, out_ch, in_ch, stride, transposed)
    }

    fn plain(&self, p: &str, in_ch: usize, out_ch: usize, stride: usize, slope: Option<f32>) -> Result<Layer> {
        Ok(Layer::Conv {
            p: self.conv(p, in_ch, out_ch, stride, false)?,
            slope,
        })
    }

    fn tconv(&self, p: &str, in_ch: usize, out_ch: usize, slope: Option<f32>) -> Result<Layer> {
        Ok(Layer::Conv {
            p: self.conv(p, in_ch, out_ch, 2, true)?,
            slope,
        })
    }

    fn weconv(&self, p: &str, in_ch: usize, out_ch: usize, transposed: bool) -> Result<Layer> {
        let stem = self.conv(p, in_ch, out_ch, 2, transposed)?;
        let gdn = load_gdn(self.w, &format!("{p}.gdn"), out_ch, transposed)?;
        if !self.cfg.weconv {
            return Ok(Layer::Plain { stem, gdn });
        }
        let branch = |tag: &str, c: usize| -> Result<Vec<ConvParams>> {
            (0..self.cfg.subband_convs)
                .map(|j| self.conv(&format!("{p}.{tag}{j}"), c, c, 1, false))
                .collect()
        };
        Ok(Layer::WeConv(WeConvParams {
            stem,
            lf_convs: branch("lf", out_ch)?,
            hf_convs: branch("hf", 3 * out_ch)?,
            gdn,
            shortcut: self.conv(&format!("{p}.shortcut"), in_ch, out_ch, 2, transposed)?,
            wavelet: self.cfg.wavelet,
            slope: self.cfg.leaky_slope,
        }))
    }

    fn resgroup(&self, p: &str, c: usize) -> Result<Layer> {
        let blocks = (0..RES_BLOCKS)
            .map(|b| {
                Ok(ResidualBlock {
                    conv0: self.conv(&format!("{p}.block{b}.conv0"), c, c, 1, false)?,
                    conv1: self.conv(&format!("{p}.block{b}.conv1"), c, c, 1, false)?,
                    slope: self.cfg.leaky_slope,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Layer::Res(ResGroup { blocks }))
    }
}

/// `y_l` (LL of the latent) and `y_h` (`[HL | LH | HH]` along channels).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPair {
    pub y_l: Tensor,
    pub y_h: Tensor,
}

impl LatentPair {
    pub fn new(y_l: Tensor, y_h: Tensor) -> Result<Self> {
        let (c, h, w) = y_l.shape();
        if y_h.shape() != (3 * c, h, w) {
            return Err(shape_err!(
                "y_h {:?} does not pair with y_l {:?}",
                y_h.shape(),
                y_l.shape()
            ));
        }
        Ok(LatentPair { y_l, y_h })
    }

    /// Packs the subbands of a latent with even dimensions.
    pub fn pack(bands: &SubbandSet) -> Result<Self> {
        LatentPair::new(bands.ll.clone(), pack_hf(&bands.hl, &bands.lh, &bands.hh)?)
    }

    pub fn unpack(&self, wavelet: crate::WaveletKind) -> Result<SubbandSet> {
        let (hl, lh, hh) = unpack_hf(&self.y_h)?;
        Ok(SubbandSet {
            ll: self.y_l.clone(),
            hl,
            lh,
            hh,
            wavelet,
            src_h: 2 * self.y_l.height(),
            src_w: 2 * self.y_l.width(),
        })
    }

    pub fn channels(&self) -> usize {
        self.y_l.channels()
    }
}

pub fn pack_hf(hl: &Tensor, lh: &Tensor, hh: &Tensor) -> Result<Tensor> {
    if !hl.same_shape(lh) || !hl.same_shape(hh) {
        return Err(shape_err!(
            "HF subbands {:?} {:?} {:?}",
            hl.shape(),
            lh.shape(),
            hh.shape()
        ));
    }
    Tensor::concat_channels(&[hl, lh, hh])
}

pub fn unpack_hf(y_h: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    if !y_h.channels().is_multiple_of(3) {
        return Err(shape_err!("{} HF channels are not a multiple of 3", y_h.channels()));
    }
    let c = y_h.channels() / 3;
    Ok((
        y_h.channel_range(0, c)?,
        y_h.channel_range(c, c)?,
        y_h.channel_range(2 * c, c)?,
    ))
}

/// Hyper-synthesis output: scales are positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInfo {
    pub l_scale: Tensor,
    pub l_mean: Tensor,
    pub h_scale: Tensor,
    pub h_mean: Tensor,
}

impl SideInfo {
    pub fn for_band(&self, band: Band) -> (&Tensor, &Tensor) {
        match band {
            Band::Lf => (&self.l_scale, &self.l_mean),
            Band::Hf => (&self.h_scale, &self.h_mean),
        }
    }
}

/// A complete set of transforms and slice networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub ga: Vec<Layer>,
    pub gs: Vec<Layer>,
    pub ha: Vec<Layer>,
    pub hs: Vec<Layer>,
    pub charm_l: Vec<SliceNet>,
    pub charm_h: Vec<SliceNet>,
}

impl Model {
    /// Builds the graph, failing with `MissingTensor` / `BadShape` on the
    /// first weight that is absent or misshapen.
    pub fn from_weights(config: ModelConfig, w: &dyn WeightSource) -> Result<Model> {
        config.validate()?;
        let l = Loader { w, cfg: &config };
        let (n, m, z) = (config.n, config.m, config.z);
        let slope = Some(config.leaky_slope);
        let ga = alloc::vec![
            l.weconv("ga.stage0", 3, n, false)?,
            l.resgroup("ga.stage1", n)?,
            l.weconv("ga.stage2", n, n, false)?,
            l.resgroup("ga.stage3", n)?,
            l.weconv("ga.stage4", n, n, false)?,
            l.resgroup("ga.stage5", n)?,
            l.plain("ga.stage6", n, m, 2, None)?,
        ];
        let gs = alloc::vec![
            l.tconv("gs.stage0", m, n, None)?,
            l.resgroup("gs.stage1", n)?,
            l.weconv("gs.stage2", n, n, true)?,
            l.resgroup("gs.stage3", n)?,
            l.weconv("gs.stage4", n, n, true)?,
            l.resgroup("gs.stage5", n)?,
            l.weconv("gs.stage6", n, 3, true)?,
        ];
        let ha = alloc::vec![
            l.plain("ha.stage0", 4 * m, n, 1, slope)?,
            l.weconv("ha.stage1", n, n, false)?,
            l.plain("ha.stage2", n, z, 2, None)?,
        ];
        let hs = alloc::vec![
            l.tconv("hs.stage0", z, n, slope)?,
            l.weconv("hs.stage1", n, n, true)?,
            l.plain("hs.stage2", n, 8 * m, 1, None)?,
        ];
        let per = m / config.slices;
        let charm_l = (0..config.slices)
            .map(|i| SliceNet::load(w, &config, Band::Lf, i, config.lf_slice_inputs(i), per))
            .collect::<Result<Vec<_>>>()?;
        let charm_h = (0..config.slices)
            .map(|i| SliceNet::load(w, &config, Band::Hf, i, config.hf_slice_inputs(i), 3 * per))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            config,
            ga,
            gs,
            ha,
            hs,
            charm_l,
            charm_h,
        })
    }

    /// `g_a` followed by the latent DWT. `x` is a normalized `3 x H x W`
    /// image with `H` and `W` positive multiples of 32.
    pub fn analysis(&self, x: &Tensor) -> Result<LatentPair> {
        let (c, h, w) = x.shape();
        if c != 3 {
            return Err(shape_err!("analysis expects 3 channels, got {c}"));
        }
        if h < LATENT_STRIDE || w < LATENT_STRIDE || h % LATENT_STRIDE != 0 || w % LATENT_STRIDE != 0 {
            return Err(Error::DegenerateInput(format!(
                "analysis needs dimensions that are positive multiples of {LATENT_STRIDE}, got {h}x{w}"
            )));
        }
        let y = run(&self.ga, x)?;
        LatentPair::pack(&dwt2d(&y, self.config.wavelet)?)
    }

    /// Latent IDWT followed by `g_s`; returns the normalized reconstruction
    /// at the padded size.
    pub fn synthesis_normalized(&self, y: &LatentPair) -> Result<Tensor> {
        if y.channels() != self.config.m {
            return Err(shape_err!(
                "synthesis expects {} latent channels, got {}",
                self.config.m,
                y.channels()
            ));
        }
        let latent = idwt2d(&y.unpack(self.config.wavelet)?)?;
        run(&self.gs, &latent)
    }

    /// Full synthesis: reconstruction in pixel values (rounded, clamped to
    /// `[0, 255]`), cropped to `height x width`.
    pub fn synthesis(&self, y: &LatentPair, height: usize, width: usize) -> Result<Tensor> {
        denormalize_image(&self.synthesis_normalized(y)?, height, width)
    }

    pub fn hyper_analysis(&self, y: &LatentPair) -> Result<Tensor> {
        let (_, h, w) = y.y_l.shape();
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(Error::DegenerateInput(format!(
                "hyper analysis needs latent dimensions divisible by 4, got {h}x{w}"
            )));
        }
        run(&self.ha, &Tensor::concat_channels(&[&y.y_l, &y.y_h])?)
    }

    pub fn hyper_synthesis(&self, z_hat: &Tensor) -> Result<SideInfo> {
        let s = run(&self.hs, z_hat)?;
        let m = self.config.m;
        let pos = |t: Tensor| t.map(softplus);
        Ok(SideInfo {
            l_scale: pos(s.channel_range(0, m)?),
            l_mean: s.channel_range(m, m)?,
            h_scale: pos(s.channel_range(2 * m, 3 * m)?),
            h_mean: s.channel_range(5 * m, 3 * m)?,
        })
    }
}

/// Size after padding to [`PAD_MULTIPLE`].
pub fn padded_dims(height: usize, width: usize) -> (usize, usize) {
    (
        height.div_ceil(PAD_MULTIPLE).max(1) * PAD_MULTIPLE,
        width.div_ceil(PAD_MULTIPLE).max(1) * PAD_MULTIPLE,
    )
}

/// Replicate-pads a `3 x H x W` image of pixel values to [`padded_dims`] and
/// maps `[0, 255]` to `[-1, 1]`.
pub fn normalize_image(pixels: &Tensor) -> Result<Tensor> {
    let (ph, pw) = padded_dims(pixels.height(), pixels.width());
    Ok(pixels.pad_replicate(ph, pw)?.map(|v| v / 127.5 - 1.0))
}

/// Maps `[-1, 1]` back to rounded pixel values in `[0, 255]` and crops.
pub fn denormalize_image(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let y = x.crop(height, width)?;
    Ok(y.map(|v| libm::roundf((v + 1.0) * 127.5).clamp(0.0, 255.0)))
}
