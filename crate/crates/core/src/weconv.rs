//! WeConv and IWeConv: a resampling stem followed by per-subband
//! convolutions in the wavelet domain, (I)GDN and a 1x1 shortcut.
//!
//! ```text
//! x -> stem -> DWT -> LL: lf convs            -> IDWT -> (I)GDN -> + -> out
//!                  \-> HL|LH|HH: hf convs -> split /                |
//! x -> shortcut ---------------------------------------------------/
//! ```

use alloc::vec::Vec;

use crate::error::shape_err;
use crate::nn::{conv2d, gdn, leaky_relu_inplace, ConvParams, GdnParams};
use crate::wavelet::{dwt2d, idwt2d};
use crate::{Error, Result, Tensor, WaveletKind};

#[derive(Debug, Clone, PartialEq)]
pub struct WeConvParams {
    /// Stride-2 convolution (WeConv) or stride-2 transposed convolution
    /// (IWeConv).
    pub stem: ConvParams,
    /// Applied to LL, leaky ReLU between consecutive convolutions.
    pub lf_convs: Vec<ConvParams>,
    /// Applied to the channel concatenation of HL, LH and HH.
    pub hf_convs: Vec<ConvParams>,
    pub gdn: GdnParams,
    pub shortcut: ConvParams,
    pub wavelet: WaveletKind,
    pub slope: f32,
}

impl WeConvParams {
    /// Output channels of the layer.
    pub fn channels(&self) -> usize {
        self.stem.out_ch
    }

    fn check(&self, x: &Tensor, transposed: bool) -> Result<()> {
        let c = self.channels();
        if self.stem.transposed != transposed || self.stem.stride != 2 {
            return Err(Error::PreconditionViolation(alloc::format!(
                "{} needs a stride-2 {}stem",
                if transposed { "IWeConv" } else { "WeConv" },
                if transposed { "transposed " } else { "" }
            )));
        }
        if x.channels() != self.stem.in_ch {
            return Err(shape_err!(
                "WeConv stem expects {} channels, got {}",
                self.stem.in_ch,
                x.channels()
            ));
        }
        let chain_ok = |convs: &[ConvParams], width: usize| {
            convs
                .iter()
                .all(|p| p.in_ch == width && p.out_ch == width && p.stride == 1 && !p.transposed)
        };
        if !chain_ok(&self.lf_convs, c) || !chain_ok(&self.hf_convs, 3 * c) {
            return Err(shape_err!(
                "subband convolutions must map {c} / {} channels to themselves",
                3 * c
            ));
        }
        if self.gdn.channels() != c || self.gdn.inverse != transposed {
            return Err(shape_err!(
                "GDN over {} channels for a {c}-channel layer",
                self.gdn.channels()
            ));
        }
        let s = &self.shortcut;
        if s.in_ch != self.stem.in_ch || s.out_ch != c || s.stride != 2 || s.transposed != transposed {
            return Err(shape_err!(
                "shortcut {}->{} stride {} does not match the stem",
                s.in_ch,
                s.out_ch,
                s.stride
            ));
        }
        Ok(())
    }
}

fn conv_chain(x: Tensor, convs: &[ConvParams], slope: f32) -> Result<Tensor> {
    let mut t = x;
    for (j, p) in convs.iter().enumerate() {
        if j > 0 {
            leaky_relu_inplace(&mut t, slope);
        }
        t = conv2d(&t, p)?;
    }
    Ok(t)
}

fn forward(x: &Tensor, p: &WeConvParams, transposed: bool) -> Result<Tensor> {
    p.check(x, transposed)?;
    let stem = conv2d(x, &p.stem)?;
    if stem.height() < 2 || stem.width() < 2 {
        return Err(Error::DegenerateInput(alloc::format!(
            "WeConv stem output {}x{} is smaller than 2x2",
            stem.height(),
            stem.width()
        )));
    }
    let mut bands = dwt2d(&stem, p.wavelet)?;
    drop(stem);
    let c = p.channels();
    bands.ll = conv_chain(bands.ll, &p.lf_convs, p.slope)?;
    if !p.hf_convs.is_empty() {
        let hf = Tensor::concat_channels(&[&bands.hl, &bands.lh, &bands.hh])?;
        let hf = conv_chain(hf, &p.hf_convs, p.slope)?;
        bands.hl = hf.channel_range(0, c)?;
        bands.lh = hf.channel_range(c, c)?;
        bands.hh = hf.channel_range(2 * c, c)?;
    }
    let y = gdn(&idwt2d(&bands)?, &p.gdn)?;
    y.add(&conv2d(x, &p.shortcut)?)
}

/// WeConv: output is `C_out x ceil(H/2) x ceil(W/2)`.
pub fn weconv_forward(x: &Tensor, p: &WeConvParams) -> Result<Tensor> {
    forward(x, p, false)
}

/// IWeConv: output is `C_out x 2H x 2W`, normalized by IGDN.
pub fn iweconv_forward(x: &Tensor, p: &WeConvParams) -> Result<Tensor> {
    forward(x, p, true)
}
