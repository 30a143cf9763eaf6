//! Two-step channel-sliced entropy model over wavelet-domain latents.
//!
//! `y_l` is split into `k` slices and coded first, slice by slice; each slice
//! network sees the LF side information and every LF slice decoded before
//! it. `y_h` follows the same scheme with its own side information plus the
//! fully decoded `y_l`. Symbols are `round(y - mu)` coded under
//! `N(0, sigma)`; the decoded value is `q + mu` on both sides.
//!
//! A coded band is `k` slice streams, each prefixed by its length (u32 LE).

use alloc::format;
use alloc::vec::Vec;

use crate::entropy::{decode_plane, estimate_rate, quantize_clamped, SymbolPlane, SIGMA_MIN, SYMBOL_BOUND};
use crate::error::shape_err;
use crate::graph::{Model, SideInfo};
use crate::nn::{conv2d, leaky_relu_inplace, softplus, ConvParams};
use crate::weights::{load_conv, ModelConfig, WeightSource};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Lf,
    Hf,
}

impl Band {
    fn tag(self) -> &'static str {
        match self {
            Band::Lf => "L",
            Band::Hf => "H",
        }
    }
}

/// A tensor cut into equal contiguous channel groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    pub slices: Vec<Tensor>,
    pub channels_per_slice: usize,
    pub origin: Band,
}

pub fn split_slices(y: &Tensor, k: usize, origin: Band) -> Result<SliceSet> {
    if k == 0 || !y.channels().is_multiple_of(k) {
        return Err(shape_err!("{} channels cannot be split into {k} slices", y.channels()));
    }
    let per = y.channels() / k;
    Ok(SliceSet {
        slices: (0..k).map(|i| y.channel_range(i * per, per)).collect::<Result<_>>()?,
        channels_per_slice: per,
        origin,
    })
}

pub fn merge_slices(s: &SliceSet) -> Result<Tensor> {
    if s.slices.iter().any(|t| t.channels() != s.channels_per_slice) {
        return Err(shape_err!("slice widths differ from {}", s.channels_per_slice));
    }
    let parts: Vec<&Tensor> = s.slices.iter().collect();
    Tensor::concat_channels(&parts)
}

/// Slice network: three 3x3 conv + leaky ReLU stages, then a mean head and a
/// scale head (softplus, floored at `SIGMA_MIN`).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceNet {
    pub band: Band,
    pub convs: Vec<ConvParams>,
    pub mu: ConvParams,
    pub sigma: ConvParams,
    pub slope: f32,
}

impl SliceNet {
    pub fn load(
        w: &dyn WeightSource,
        cfg: &ModelConfig,
        band: Band,
        index: usize,
        in_ch: usize,
        out_ch: usize,
    ) -> Result<SliceNet> {
        let p = format!("charm.{}.slice{index}", band.tag());
        let width = cfg.charm_width;
        let convs = (0..3)
            .map(|j| {
                load_conv(
                    w,
                    &format!("{p}.conv{j}"),
                    width,
                    if j == 0 { in_ch } else { width },
                    1,
                    false,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SliceNet {
            band,
            convs,
            mu: load_conv(w, &format!("{p}.mu"), out_ch, width, 1, false)?,
            sigma: load_conv(w, &format!("{p}.sigma"), out_ch, width, 1, false)?,
            slope: cfg.leaky_slope,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.convs.first().map_or(0, |c| c.in_ch)
    }

    pub fn out_channels(&self) -> usize {
        self.mu.out_ch
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut t = input.clone();
        for c in &self.convs {
            t = conv2d(&t, c)?;
            leaky_relu_inplace(&mut t, self.slope);
        }
        let mu = conv2d(&t, &self.mu)?;
        let sigma = conv2d(&t, &self.sigma)?.map(|v| softplus(v).max(SIGMA_MIN));
        Ok((mu, sigma))
    }
}

/// Everything a slice network conditions on.
#[derive(Debug, Clone, Copy)]
pub struct SliceContext<'a> {
    pub side_scale: &'a Tensor,
    pub side_mean: &'a Tensor,
    /// Present exactly for HF slices.
    pub decoded_lf: Option<&'a Tensor>,
    /// Decoded slices of the same band with lower indices.
    pub decoded_prev: &'a [Tensor],
}

pub fn predict_slice_params(ctx: &SliceContext<'_>, net: &SliceNet) -> Result<(Tensor, Tensor)> {
    match (net.band, ctx.decoded_lf.is_some()) {
        (Band::Hf, false) => {
            return Err(Error::PreconditionViolation(
                "HF slice parameters need the decoded LF band".into(),
            ))
        }
        (Band::Lf, true) => {
            return Err(Error::PreconditionViolation(
                "LF slices cannot condition on the LF band itself".into(),
            ))
        }
        _ => {}
    }
    let mut parts: Vec<&Tensor> = alloc::vec![ctx.side_scale, ctx.side_mean];
    parts.extend(ctx.decoded_lf);
    parts.extend(ctx.decoded_prev.iter());
    let (h, w) = (ctx.side_scale.height(), ctx.side_scale.width());
    if parts.iter().any(|t| t.height() != h || t.width() != w) {
        return Err(shape_err!("slice context tensors are not spatially aligned"));
    }
    let input = Tensor::concat_channels(&parts)?;
    if input.channels() != net.in_channels() {
        return Err(shape_err!(
            "slice network expects {} context channels, got {}",
            net.in_channels(),
            input.channels()
        ));
    }
    net.forward(&input)
}

/// Result of coding one band.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedBand {
    /// Length-prefixed slice streams.
    pub bytes: Vec<u8>,
    /// What the decoder will reconstruct (`q + mu` per slice).
    pub decoded: Tensor,
    /// Model rate of the symbols, in bits.
    pub estimated_bits: f64,
    /// Range-coded payload bytes, excluding length prefixes.
    pub payload_bytes: usize,
}

fn nets(model: &Model, band: Band) -> &[SliceNet] {
    match band {
        Band::Lf => &model.charm_l,
        Band::Hf => &model.charm_h,
    }
}

fn check_side(model: &Model, side: &SideInfo, band: Band, y_shape: (usize, usize, usize)) -> Result<()> {
    let (scale, mean) = side.for_band(band);
    let want = match band {
        Band::Lf => model.config.m,
        Band::Hf => 3 * model.config.m,
    };
    if scale.shape() != y_shape || mean.shape() != y_shape || y_shape.0 != want {
        return Err(shape_err!(
            "band {:?}: latent {:?}, side info {:?} / {:?}, model width {want}",
            band,
            y_shape,
            scale.shape(),
            mean.shape()
        ));
    }
    Ok(())
}

fn encode_band(model: &Model, band: Band, y: &Tensor, lf: Option<&Tensor>, side: &SideInfo) -> Result<CodedBand> {
    check_side(model, side, band, y.shape())?;
    let (scale, mean) = side.for_band(band);
    let nets = nets(model, band);
    let input = split_slices(y, nets.len(), band)?;
    let mut decoded: Vec<Tensor> = Vec::with_capacity(nets.len());
    let mut bytes = Vec::new();
    let mut estimated_bits = 0.0;
    let mut payload_bytes = 0;
    for (net, slice) in nets.iter().zip(&input.slices) {
        let ctx = SliceContext {
            side_scale: scale,
            side_mean: mean,
            decoded_lf: lf,
            decoded_prev: &decoded,
        };
        let (mu, sigma) = predict_slice_params(&ctx, net)?;
        let q = quantize_clamped(slice, &mu, SYMBOL_BOUND)?;
        let plane = SymbolPlane::new(q, alloc::vec![0.0; mu.data().len()], sigma.into_vec(), SYMBOL_BOUND)?;
        let stream = plane.encode()?;
        estimated_bits += estimate_rate(&plane);
        payload_bytes += stream.len();
        bytes.extend_from_slice(&(stream.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&stream);
        decoded.push(crate::entropy::dequantize(&plane.symbols, &mu)?);
    }
    let decoded = merge_slices(&SliceSet {
        slices: decoded,
        channels_per_slice: input.channels_per_slice,
        origin: band,
    })?;
    Ok(CodedBand {
        bytes,
        decoded,
        estimated_bits,
        payload_bytes,
    })
}

/// Splits a band segment into its slice streams.
pub fn split_segment(bytes: &[u8], k: usize) -> Result<Vec<&[u8]>> {
    let mut out = Vec::with_capacity(k);
    let mut pos = 0usize;
    for i in 0..k {
        let len = bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| Error::DecodingError(format!("slice {i} length prefix truncated")))?;
        pos += 4;
        let end = pos
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::DecodingError(format!("slice {i} stream truncated")))?;
        out.push(&bytes[pos..end]);
        pos = end;
    }
    if pos != bytes.len() {
        return Err(Error::DecodingError(format!(
            "{} trailing bytes after {k} slice streams",
            bytes.len() - pos
        )));
    }
    Ok(out)
}

// Decodes slices in order until one fails; returns what was decoded.
fn decode_band_slices(
    model: &Model,
    band: Band,
    bytes: &[u8],
    lf: Option<&Tensor>,
    side: &SideInfo,
) -> (Vec<Tensor>, Option<Error>) {
    let (scale, mean) = side.for_band(band);
    let nets = nets(model, band);
    let mut decoded: Vec<Tensor> = Vec::with_capacity(nets.len());
    let streams = match split_segment(bytes, nets.len()) {
        Ok(s) => s,
        Err(e) => return (decoded, Some(e)),
    };
    for (net, stream) in nets.iter().zip(streams) {
        let step = || -> Result<Tensor> {
            let ctx = SliceContext {
                side_scale: scale,
                side_mean: mean,
                decoded_lf: lf,
                decoded_prev: &decoded,
            };
            let (mu, sigma) = predict_slice_params(&ctx, net)?;
            let zeros = alloc::vec![0.0; mu.data().len()];
            let q = decode_plane(stream, &zeros, sigma.data(), SYMBOL_BOUND)?;
            crate::entropy::dequantize(&q, &mu)
        };
        match step() {
            Ok(t) => decoded.push(t),
            Err(e) => return (decoded, Some(e)),
        }
    }
    (decoded, None)
}

fn decode_band(model: &Model, band: Band, bytes: &[u8], lf: Option<&Tensor>, side: &SideInfo) -> Result<Tensor> {
    let (slices, err) = decode_band_slices(model, band, bytes, lf, side);
    if let Some(e) = err {
        return Err(e);
    }
    let per = slices.first().map_or(0, Tensor::channels);
    merge_slices(&SliceSet {
        slices,
        channels_per_slice: per,
        origin: band,
    })
}

pub fn encode_lf(y_l: &Tensor, side: &SideInfo, model: &Model) -> Result<CodedBand> {
    encode_band(model, Band::Lf, y_l, None, side)
}

pub fn decode_lf(bytes: &[u8], side: &SideInfo, model: &Model) -> Result<Tensor> {
    check_side(model, side, Band::Lf, side.l_scale.shape())?;
    decode_band(model, Band::Lf, bytes, None, side)
}

/// Decodes LF slices in order, stopping at the first failure. Returns the
/// slices decoded so far and the error, if any.
pub fn decode_lf_slices(bytes: &[u8], side: &SideInfo, model: &Model) -> (Vec<Tensor>, Option<Error>) {
    decode_band_slices(model, Band::Lf, bytes, None, side)
}

fn check_lf(decoded_lf: &Tensor, side: &SideInfo) -> Result<()> {
    if decoded_lf.shape() != side.l_scale.shape() {
        return Err(Error::PreconditionViolation(format!(
            "decoded LF band {:?} does not match the LF side info {:?}",
            decoded_lf.shape(),
            side.l_scale.shape()
        )));
    }
    Ok(())
}

pub fn encode_hf(y_h: &Tensor, decoded_lf: &Tensor, side: &SideInfo, model: &Model) -> Result<CodedBand> {
    check_lf(decoded_lf, side)?;
    encode_band(model, Band::Hf, y_h, Some(decoded_lf), side)
}

pub fn decode_hf(bytes: &[u8], decoded_lf: &Tensor, side: &SideInfo, model: &Model) -> Result<Tensor> {
    check_lf(decoded_lf, side)?;
    check_side(model, side, Band::Hf, side.h_scale.shape())?;
    decode_band(model, Band::Hf, bytes, Some(decoded_lf), side)
}

/// Decoder session enforcing the LF-then-HF order.
#[derive(Debug)]
pub struct CharmDecoder<'a> {
    model: &'a Model,
    side: &'a SideInfo,
    lf: Option<Tensor>,
}

impl<'a> CharmDecoder<'a> {
    pub fn new(model: &'a Model, side: &'a SideInfo) -> Self {
        CharmDecoder { model, side, lf: None }
    }

    pub fn decode_lf(&mut self, bytes: &[u8]) -> Result<&Tensor> {
        let lf = decode_lf(bytes, self.side, self.model)?;
        Ok(self.lf.insert(lf))
    }

    pub fn decode_hf(&self, bytes: &[u8]) -> Result<Tensor> {
        let lf = self
            .lf
            .as_ref()
            .ok_or_else(|| Error::PreconditionViolation("HF band decoded before the LF band".into()))?;
        decode_hf(bytes, lf, self.side, self.model)
    }

    pub fn decoded_lf(&self) -> Option<&Tensor> {
        self.lf.as_ref()
    }
}
