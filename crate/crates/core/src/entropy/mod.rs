//! Quantization, symbol models, range coding and rate estimation.

mod factorized;
mod gaussian;
mod range_coder;

use alloc::vec::Vec;

pub use factorized::{build_factorized_cdf, CdfTable, ChannelCdf, FactorizedCoder};
pub use gaussian::{
    gaussian_symbol_prob, gaussian_symbol_prob_bounded, interval_mass, phi, GaussianCoder, PhiTable, P_FLOOR,
    SIGMA_MIN, SYMBOL_BOUND,
};
pub use range_coder::{RangeDecoder, RangeEncoder, PROB_BITS, PROB_TOTAL};

use crate::error::shape_err;
use crate::{Error, Result, Tensor};

/// Per-element symbol model driving the range coder. `i` is the position of
/// the symbol in the sequence.
pub trait SymbolCoder {
    fn encode_symbol(&self, i: usize, s: i32, enc: &mut RangeEncoder) -> Result<()>;
    fn decode_symbol(&self, i: usize, dec: &mut RangeDecoder) -> Result<i32>;
}

pub fn range_encode<C: SymbolCoder + ?Sized>(symbols: &[i32], coder: &C) -> Result<Vec<u8>> {
    let mut enc = RangeEncoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        coder.encode_symbol(i, s, &mut enc)?;
    }
    Ok(enc.finish())
}

/// Decodes exactly `n` symbols; the stream must be consumed completely.
pub fn range_decode<C: SymbolCoder + ?Sized>(bytes: &[u8], coder: &C, n: usize) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(coder.decode_symbol(i, &mut dec)?);
    }
    dec.finish()?;
    Ok(out)
}

/// Rounds half away from zero.
pub fn round_half_away(v: f32) -> f32 {
    libm::roundf(v)
}

/// `round(x - mean)` elementwise.
pub fn quantize(x: &Tensor, mean: &Tensor) -> Result<Vec<i32>> {
    quantize_clamped(x, mean, i32::MAX)
}

/// [`quantize`] with the result clamped to `[-bound, bound]`.
pub fn quantize_clamped(x: &Tensor, mean: &Tensor, bound: i32) -> Result<Vec<i32>> {
    if !x.same_shape(mean) {
        return Err(shape_err!("quantize: {:?} vs mean {:?}", x.shape(), mean.shape()));
    }
    let bound = bound as f32;
    x.data()
        .iter()
        .zip(mean.data())
        .map(|(&v, &m)| {
            let r = v - m;
            if !r.is_finite() {
                return Err(Error::NumericalError("non-finite value in quantizer".into()));
            }
            Ok(round_half_away(r).clamp(-bound, bound) as i32)
        })
        .collect()
}

/// `q + mean` elementwise.
pub fn dequantize(q: &[i32], mean: &Tensor) -> Result<Tensor> {
    if q.len() != mean.data().len() {
        return Err(shape_err!("dequantize: {} symbols vs {:?}", q.len(), mean.shape()));
    }
    let mut out = mean.clone();
    for (o, &s) in out.data_mut().iter_mut().zip(q) {
        *o += s as f32;
    }
    Ok(out)
}

/// Quantized symbols with their per-element Gaussian model.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPlane {
    pub symbols: Vec<i32>,
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
    pub bound: i32,
}

impl SymbolPlane {
    /// Validates lengths and symbol range and clamps `sigma` to
    /// [`SIGMA_MIN`].
    pub fn new(symbols: Vec<i32>, mu: Vec<f32>, mut sigma: Vec<f32>, bound: i32) -> Result<Self> {
        if symbols.len() != mu.len() || mu.len() != sigma.len() {
            return Err(shape_err!(
                "symbol plane: {} symbols, {} means, {} scales",
                symbols.len(),
                mu.len(),
                sigma.len()
            ));
        }
        if bound < 1 {
            return Err(Error::DegenerateInput("symbol bound must be positive".into()));
        }
        if let Some(s) = symbols.iter().find(|s| s.abs() > bound) {
            return Err(Error::EncodingError(alloc::format!(
                "symbol {s} outside [-{bound}, {bound}]"
            )));
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::NumericalError("non-finite Gaussian parameter".into()));
        }
        for s in &mut sigma {
            *s = s.max(SIGMA_MIN);
        }
        Ok(SymbolPlane {
            symbols,
            mu,
            sigma,
            bound,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn concat(&self, other: &SymbolPlane) -> Result<SymbolPlane> {
        if self.bound != other.bound {
            return Err(shape_err!("planes with different symbol bounds"));
        }
        let join = |a: &[f32], b: &[f32]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Ok(SymbolPlane {
            symbols: self.symbols.iter().chain(&other.symbols).copied().collect(),
            mu: join(&self.mu, &other.mu),
            sigma: join(&self.sigma, &other.sigma),
            bound: self.bound,
        })
    }

    pub fn coder(&self) -> GaussianCoder<'_> {
        GaussianCoder::new(&self.mu, &self.sigma, self.bound)
            .expect("symbol plane parameters are validated on construction")
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        range_encode(&self.symbols, &self.coder())
    }
}

/// Decodes a plane coded with [`SymbolPlane::encode`] given its model.
pub fn decode_plane(bytes: &[u8], mu: &[f32], sigma: &[f32], bound: i32) -> Result<Vec<i32>> {
    let coder = GaussianCoder::new(mu, sigma, bound)?;
    range_decode(bytes, &coder, mu.len())
}

/// Sum of `-log2 p` over the plane.
pub fn estimate_rate(plane: &SymbolPlane) -> f64 {
    plane
        .symbols
        .iter()
        .zip(&plane.mu)
        .zip(&plane.sigma)
        .map(|((&q, &m), &s)| -libm::log2(gaussian_symbol_prob_bounded(q, m, s, plane.bound)))
        .sum()
}

/// Estimated and actual rate of one coded image.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateReport {
    pub bits_yl: f64,
    pub bits_yh: f64,
    pub bits_z: f64,
    pub bytes_yl: usize,
    pub bytes_yh: usize,
    pub bytes_z: usize,
}

impl RateReport {
    pub fn estimated_bits(&self) -> f64 {
        self.bits_yl + self.bits_yh + self.bits_z
    }

    pub fn actual_bits(&self) -> u64 {
        8 * (self.bytes_yl + self.bytes_yh + self.bytes_z) as u64
    }
}
