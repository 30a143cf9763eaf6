//! Byte-oriented range coder with 16-bit probability precision.
//!
//! 64-bit `low` with carry propagation through a cached byte, 32-bit
//! `range`, renormalized whenever the range drops below 2^24. The leading
//! byte of the classic formulation is always zero and is not emitted, so an
//! empty message encodes to exactly four bytes.

use alloc::vec::Vec;

use crate::{Error, Result};

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
const TOP: u32 = 1 << 24;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            skip_first: true,
            out: Vec::new(),
        }
    }

    /// Codes the interval `[start, start + size)` out of `2^16`.
    pub fn encode(&mut self, start: u32, size: u32) {
        debug_assert!(size > 0 && start + size <= PROB_TOTAL);
        let r = self.range >> PROB_BITS;
        self.low += start as u64 * r as u64;
        self.range = r * size;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_bit(&mut self, bit: bool) {
        let half = PROB_TOTAL / 2;
        self.encode(if bit { half } else { 0 }, half);
    }

    /// Order-0 Exp-Golomb code of `value`, one equiprobable bit at a time.
    pub fn encode_exp_golomb(&mut self, value: u32) {
        let v = value as u64 + 1;
        let nbits = 64 - v.leading_zeros();
        for _ in 1..nbits {
            self.encode_bit(false);
        }
        for i in (0..nbits).rev() {
            self.encode_bit((v >> i) & 1 == 1);
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                if self.skip_first {
                    self.skip_first = false;
                } else {
                    self.out.push(byte.wrapping_add(carry));
                }
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
    r: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
            r: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::DecodingError("range coder stream truncated".into()))?;
        self.pos += 1;
        Ok(b)
    }

    /// Cumulative-frequency target of the next symbol. Must be followed by
    /// exactly one [`consume`](Self::consume).
    pub fn target(&mut self) -> u32 {
        self.r = self.range >> PROB_BITS;
        (self.code / self.r).min(PROB_TOTAL - 1)
    }

    pub fn consume(&mut self, start: u32, size: u32) -> Result<()> {
        let base = start * self.r;
        if self.code < base || size == 0 {
            return Err(Error::DecodingError("inconsistent symbol interval".into()));
        }
        self.code -= base;
        self.range = self.r * size;
        if self.code >= self.range {
            return Err(Error::DecodingError("code outside symbol interval".into()));
        }
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }

    pub fn decode_bit(&mut self) -> Result<bool> {
        let half = PROB_TOTAL / 2;
        let bit = self.target() >= half;
        self.consume(if bit { half } else { 0 }, half)?;
        Ok(bit)
    }

    pub fn decode_exp_golomb(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.decode_bit()? {
            zeros += 1;
            if zeros > 32 {
                return Err(Error::DecodingError("Exp-Golomb prefix too long".into()));
            }
        }
        let mut v: u64 = 1;
        for _ in 0..zeros {
            v = (v << 1) | self.decode_bit()? as u64;
        }
        u32::try_from(v - 1).map_err(|_| Error::DecodingError("Exp-Golomb overflow".into()))
    }

    /// Checks that the stream was consumed exactly.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::DecodingError(alloc::format!(
                "{} trailing bytes after range coded data",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}
