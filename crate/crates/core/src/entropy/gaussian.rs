//! Discretized Gaussian symbol model.
//!
//! Two views of the same distribution live here:
//!
//! - [`gaussian_symbol_prob`] is the real-valued probability of an integer
//!   symbol, `Phi((q - mu + 1/2) / sigma) - Phi((q - mu - 1/2) / sigma)`, with
//!   the tails beyond the symbol range folded into the two edge symbols. It
//!   drives rate estimation.
//! - [`GaussianCoder`] turns `(mu, sigma)` into 16-bit cumulative frequencies
//!   for the range coder. Only a window around `mu` is modelled (up to
//!   `10 sigma`, at most `4 sigma + 128` symbols); the window's edge symbols
//!   also stand for everything beyond them, followed by an Exp-Golomb coded
//!   overshoot. Frequencies come from a fixed-point table of Phi whose
//!   entries are monotone by construction. Symbols in the dense core of the
//!   window get their frequency from the Gaussian alone; the sparse tails
//!   add one count per symbol so that none drops to zero. Encoder and
//!   decoder derive bit-identical tables on any platform.
//!
//! Phi itself is evaluated through `erfc` from `libm` (the fdlibm rational
//! approximations, accurate to about one ulp in double precision).

use alloc::vec::Vec;

use super::range_coder::{RangeDecoder, RangeEncoder, PROB_TOTAL};
use super::SymbolCoder;
use crate::{Error, Result};

/// Largest symbol magnitude used for latent coding.
pub const SYMBOL_BOUND: i32 = 255;
pub const SIGMA_MIN: f32 = 0.11;
/// Lower bound applied to [`gaussian_symbol_prob`].
pub const P_FLOOR: f64 = 1.0 / PROB_TOTAL as f64;

const WINDOW_SIGMAS: f64 = 10.0;
const TAIL_SIGMAS: f64 = 4.0;
const TAIL_BUDGET: i64 = 128;
const MAX_HALF_WINDOW: i64 = 4096;
// Core symbols must carry at least this many counts from the Gaussian alone.
const CORE_MARGIN: f64 = 3.0;

const TABLE_RANGE: f64 = 9.0;
const TABLE_STEPS_PER_UNIT: f64 = 1024.0;
const TABLE_ONE: u32 = 1 << 31;
const FRAC_BITS: u32 = 16;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

// Probability mass of a standard normal on [a, b], evaluated on the side of
// zero where the subtraction does not cancel.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        phi(-a) - phi(-b)
    } else {
        phi(b) - phi(a)
    }
}

/// Probability of symbol `q` under `N(mu, sigma)` discretized to unit bins
/// over `[-bound, bound]`, edge bins absorbing the tails, floored at
/// [`P_FLOOR`]. Symbols outside the range also get the floor.
pub fn gaussian_symbol_prob_bounded(q: i32, mu: f32, sigma: f32, bound: i32) -> f64 {
    if q < -bound || q > bound {
        return P_FLOOR;
    }
    interval_mass(q, mu, sigma, bound).max(P_FLOOR)
}

/// [`gaussian_symbol_prob_bounded`] over the latent range `[-255, 255]`.
pub fn gaussian_symbol_prob(q: i32, mu: f32, sigma: f32) -> f64 {
    gaussian_symbol_prob_bounded(q, mu, sigma, SYMBOL_BOUND)
}

/// Unfloored bin mass; sums to one over `[-bound, bound]`.
pub fn interval_mass(q: i32, mu: f32, sigma: f32, bound: i32) -> f64 {
    let sigma = sigma.max(SIGMA_MIN) as f64;
    let mu = mu as f64;
    let lo = if q <= -bound {
        f64::NEG_INFINITY
    } else {
        (q as f64 - 0.5 - mu) / sigma
    };
    let hi = if q >= bound {
        f64::INFINITY
    } else {
        (q as f64 + 0.5 - mu) / sigma
    };
    normal_mass(lo, hi)
}

/// Monotone fixed-point table of Phi on `[-9, 9]`, linearly interpolated in
/// integer arithmetic.
#[derive(Debug, Clone)]
pub struct PhiTable {
    values: Vec<u32>,
}

impl Default for PhiTable {
    fn default() -> Self {
        Self::new()
    }
}

impl PhiTable {
    pub fn new() -> Self {
        let n = (2.0 * TABLE_RANGE * TABLE_STEPS_PER_UNIT) as usize + 1;
        let mut values = Vec::with_capacity(n);
        let mut prev = 0u32;
        for j in 0..n {
            let x = -TABLE_RANGE + j as f64 / TABLE_STEPS_PER_UNIT;
            let v = libm::round(phi(x) * TABLE_ONE as f64) as u32;
            prev = prev.max(v.min(TABLE_ONE));
            values.push(prev);
        }
        values[0] = 0;
        *values.last_mut().unwrap() = TABLE_ONE;
        PhiTable { values }
    }

    /// Phi(x) scaled by 2^31; non-decreasing in `x`.
    pub fn lookup(&self, x: f64) -> u32 {
        if x <= -TABLE_RANGE {
            return 0;
        }
        if x >= TABLE_RANGE {
            return TABLE_ONE;
        }
        let u = ((x + TABLE_RANGE) * (TABLE_STEPS_PER_UNIT * (1u64 << FRAC_BITS) as f64)) as u64;
        let j = (u >> FRAC_BITS) as usize;
        if j + 1 >= self.values.len() {
            return TABLE_ONE;
        }
        let frac = u & ((1 << FRAC_BITS) - 1);
        let (a, b) = (self.values[j] as u64, self.values[j + 1] as u64);
        (a + (((b - a) * frac) >> FRAC_BITS)) as u32
    }
}

/// Coded window of one Gaussian symbol.
#[derive(Debug, Clone, Copy)]
struct Window {
    lo: i32,
    hi: i32,
    // Core symbols are `core_lo..core_end`; the rest of the window is tail.
    core_lo: i32,
    core_end: i32,
    mu: f64,
    sigma: f64,
    spread: u64,
}

impl Window {
    fn new(mu: f32, sigma: f32, bound: i32) -> Self {
        let sigma = sigma.max(SIGMA_MIN) as f64;
        let mu = mu as f64;
        let center = (libm::round(mu) as i64).clamp(-(bound as i64), bound as i64);
        let half = (libm::ceil(WINDOW_SIGMAS * sigma) as i64 + 1)
            .min(libm::ceil(TAIL_SIGMAS * sigma) as i64 + TAIL_BUDGET)
            .min(MAX_HALF_WINDOW);
        let lo = (center - half).max(-(bound as i64)) as i32;
        let hi = (center + half).min(bound as i64) as i32;

        // Every symbol within `t sigma` of the mean has mass of at least
        // phi(t) / sigma, which must be worth CORE_MARGIN counts out of the
        // smallest possible spread.
        let min_spread = (PROB_TOTAL as i64 - 2 * MAX_HALF_WINDOW - 1) as f64;
        let ratio = min_spread / (CORE_MARGIN * sigma * libm::sqrt(2.0 * core::f64::consts::PI));
        let reach = if ratio > 1.0 {
            libm::sqrt(2.0 * libm::log(ratio)) * sigma - 0.5
        } else {
            -1.0
        };
        let (core_lo, core_end) = if reach >= 0.0 {
            let a = (libm::ceil(mu - reach) as i64).clamp(lo as i64, hi as i64 + 1) as i32;
            let b = (libm::floor(mu + reach) as i64 + 1).clamp(a as i64, hi as i64 + 1) as i32;
            (a, b)
        } else {
            (hi + 1, hi + 1)
        };
        let tails = (hi - lo + 1) - (core_end - core_lo);
        Window {
            lo,
            hi,
            core_lo,
            core_end,
            mu,
            sigma,
            spread: PROB_TOTAL as u64 - tails as u64,
        }
    }

    // Tail symbols in `lo..k`.
    fn tails_below(&self, k: i32) -> u32 {
        ((k.min(self.core_lo) - self.lo) + (k - self.core_end).max(0)) as u32
    }

    // Cumulative frequency of all window symbols below `k`.
    fn cum(&self, table: &PhiTable, k: i32) -> u32 {
        if k <= self.lo {
            return 0;
        }
        if k > self.hi {
            return PROB_TOTAL;
        }
        let x = (k as f64 - 0.5 - self.mu) / self.sigma;
        let mass = (table.lookup(x) as u64 * self.spread) >> 31;
        self.tails_below(k) + mass as u32
    }
}

/// Per-element Gaussian models for a whole plane of symbols.
#[derive(Debug)]
pub struct GaussianCoder<'a> {
    table: PhiTable,
    mu: &'a [f32],
    sigma: &'a [f32],
    bound: i32,
}

impl<'a> GaussianCoder<'a> {
    pub fn new(mu: &'a [f32], sigma: &'a [f32], bound: i32) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(crate::error::shape_err!("{} means vs {} scales", mu.len(), sigma.len()));
        }
        if bound < 1 {
            return Err(Error::DegenerateInput("symbol bound must be positive".into()));
        }
        if mu.iter().chain(sigma).any(|v| !v.is_finite()) {
            return Err(Error::NumericalError("non-finite Gaussian parameter".into()));
        }
        Ok(GaussianCoder {
            table: PhiTable::new(),
            mu,
            sigma,
            bound,
        })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    fn window(&self, i: usize) -> Window {
        Window::new(self.mu[i], self.sigma[i], self.bound)
    }

    /// Coded frequency of `q` for element `i` (the window edge frequency for
    /// escaped symbols, excluding the Exp-Golomb suffix).
    pub fn coded_frequency(&self, i: usize, q: i32) -> u32 {
        let w = self.window(i);
        let k = q.clamp(w.lo, w.hi);
        w.cum(&self.table, k + 1) - w.cum(&self.table, k)
    }
}

impl SymbolCoder for GaussianCoder<'_> {
    fn encode_symbol(&self, i: usize, s: i32, enc: &mut RangeEncoder) -> Result<()> {
        if s < -self.bound || s > self.bound {
            return Err(Error::EncodingError(alloc::format!(
                "symbol {s} outside [-{b}, {b}]",
                b = self.bound
            )));
        }
        let w = self.window(i);
        let k = s.clamp(w.lo, w.hi);
        let start = w.cum(&self.table, k);
        enc.encode(start, w.cum(&self.table, k + 1) - start);
        if k == w.lo && w.lo > -self.bound {
            enc.encode_exp_golomb((w.lo - s) as u32);
        } else if k == w.hi && w.hi < self.bound {
            enc.encode_exp_golomb((s - w.hi) as u32);
        }
        Ok(())
    }

    fn decode_symbol(&self, i: usize, dec: &mut RangeDecoder) -> Result<i32> {
        let w = self.window(i);
        let target = dec.target();
        let (mut a, mut b) = (w.lo, w.hi);
        while a < b {
            let mid = a + (b - a + 1) / 2;
            if w.cum(&self.table, mid) <= target {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        let start = w.cum(&self.table, a);
        dec.consume(start, w.cum(&self.table, a + 1) - start)?;
        let s = if a == w.lo && w.lo > -self.bound {
            w.lo as i64 - dec.decode_exp_golomb()? as i64
        } else if a == w.hi && w.hi < self.bound {
            w.hi as i64 + dec.decode_exp_golomb()? as i64
        } else {
            a as i64
        };
        if s < -(self.bound as i64) || s > self.bound as i64 {
            return Err(Error::DecodingError(alloc::format!(
                "decoded symbol {s} outside the symbol range"
            )));
        }
        Ok(s as i32)
    }
}
