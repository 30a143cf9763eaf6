//! Per-channel factorized CDF tables, used for the hyper-latent.

use alloc::vec;
use alloc::vec::Vec;

use super::range_coder::{RangeDecoder, RangeEncoder, PROB_TOTAL};
use super::SymbolCoder;
use crate::{Error, Result};

/// Quantized CDF of one channel over `[min, min + len)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelCdf {
    pub min: i32,
    /// `len + 1` cumulative frequencies: first 0, last 2^16, strictly
    /// increasing.
    pub cum: Vec<u32>,
}

impl ChannelCdf {
    pub fn max(&self) -> i32 {
        self.min + self.cum.len() as i32 - 2
    }

    pub fn frequency(&self, s: i32) -> Option<u32> {
        let k = s.checked_sub(self.min)?;
        if k < 0 || k as usize + 1 >= self.cum.len() {
            return None;
        }
        Some(self.cum[k as usize + 1] - self.cum[k as usize])
    }

    pub fn probability(&self, s: i32) -> f64 {
        self.frequency(s).unwrap_or(0) as f64 / PROB_TOTAL as f64
    }

    fn validate(&self) -> Result<()> {
        let ok = self.cum.len() >= 2
            && self.cum[0] == 0
            && *self.cum.last().unwrap() == PROB_TOTAL
            && self.cum.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::DecodingError("invalid cumulative frequency table".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    pub channels: Vec<ChannelCdf>,
}

// Quantizes positive weights to frequencies summing to 2^16, each >= 1.
fn quantize_weights(weights: &[u64]) -> Vec<u32> {
    let total: u64 = weights.iter().sum();
    let mut freq: Vec<u32> = weights
        .iter()
        .map(|&w| ((w * PROB_TOTAL as u64) / total).max(1) as u32)
        .collect();
    let sum: i64 = freq.iter().map(|&f| f as i64).sum();
    let largest = (0..freq.len()).max_by_key(|&i| (freq[i], usize::MAX - i)).unwrap();
    freq[largest] = (freq[largest] as i64 + PROB_TOTAL as i64 - sum) as u32;
    freq
}

/// Builds one CDF per channel from the channel's samples: an add-one
/// smoothed histogram over `[min - 1, max + 1]`, quantized to 16 bits.
pub fn build_factorized_cdf(samples: &[Vec<i32>]) -> Result<CdfTable> {
    let mut channels = Vec::with_capacity(samples.len());
    for (c, s) in samples.iter().enumerate() {
        let (Some(&lo), Some(&hi)) = (s.iter().min(), s.iter().max()) else {
            return Err(Error::DegenerateInput(alloc::format!("channel {c} has no samples")));
        };
        let lo = (lo - 1).max(i16::MIN as i32);
        let hi = (hi + 1).min(i16::MAX as i32);
        let n = (hi - lo + 1) as usize;
        if n > (PROB_TOTAL / 4) as usize {
            return Err(Error::DegenerateInput(alloc::format!("channel {c} spans {n} symbols")));
        }
        let mut counts = vec![1u64; n];
        for &v in s {
            let v = v.clamp(lo, hi);
            counts[(v - lo) as usize] += 1;
        }
        let freq = quantize_weights(&counts);
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0);
        let mut acc = 0;
        for f in freq {
            acc += f;
            cum.push(acc);
        }
        channels.push(ChannelCdf { min: lo, cum });
    }
    Ok(CdfTable { channels })
}

impl CdfTable {
    /// `u16` channel count, then per channel `min: i16`, `max: i16` and the
    /// interior cumulative frequencies as `u16` (the leading 0 and trailing
    /// 2^16 are implied). All little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.channels.len() as u16).to_le_bytes());
        for ch in &self.channels {
            out.extend_from_slice(&(ch.min as i16).to_le_bytes());
            out.extend_from_slice(&(ch.max() as i16).to_le_bytes());
            for &v in &ch.cum[1..ch.cum.len() - 1] {
                out.extend_from_slice(&(v as u16).to_le_bytes());
            }
        }
        out
    }

    /// Parses a table from the front of `bytes`; returns it with the number
    /// of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(CdfTable, usize)> {
        let mut pos = 0;
        let take2 = |pos: &mut usize| -> Result<[u8; 2]> {
            let b = bytes
                .get(*pos..*pos + 2)
                .ok_or_else(|| Error::DecodingError("CDF table truncated".into()))?;
            *pos += 2;
            Ok([b[0], b[1]])
        };
        let n_ch = u16::from_le_bytes(take2(&mut pos)?) as usize;
        let mut channels = Vec::with_capacity(n_ch);
        for _ in 0..n_ch {
            let min = i16::from_le_bytes(take2(&mut pos)?) as i32;
            let max = i16::from_le_bytes(take2(&mut pos)?) as i32;
            if max < min {
                return Err(Error::DecodingError("CDF support is empty".into()));
            }
            let n = (max - min + 1) as usize;
            let mut cum = Vec::with_capacity(n + 1);
            cum.push(0);
            for _ in 1..n {
                cum.push(u16::from_le_bytes(take2(&mut pos)?) as u32);
            }
            cum.push(PROB_TOTAL);
            let ch = ChannelCdf { min, cum };
            ch.validate()?;
            channels.push(ch);
        }
        Ok((CdfTable { channels }, pos))
    }

    /// Coder for a channel-major plane with `per_channel` symbols per channel.
    pub fn coder(&self, per_channel: usize) -> FactorizedCoder<'_> {
        FactorizedCoder {
            table: self,
            per_channel: per_channel.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FactorizedCoder<'a> {
    table: &'a CdfTable,
    per_channel: usize,
}

impl FactorizedCoder<'_> {
    fn channel(&self, i: usize) -> Result<&ChannelCdf> {
        self.table
            .channels
            .get(i / self.per_channel)
            .ok_or_else(|| Error::PreconditionViolation("symbol index beyond CDF channels".into()))
    }

    pub fn probability(&self, i: usize, s: i32) -> f64 {
        self.channel(i).map(|c| c.probability(s)).unwrap_or(0.0)
    }
}

impl SymbolCoder for FactorizedCoder<'_> {
    fn encode_symbol(&self, i: usize, s: i32, enc: &mut RangeEncoder) -> Result<()> {
        let ch = self.channel(i)?;
        let f = ch.frequency(s).ok_or_else(|| {
            Error::EncodingError(alloc::format!(
                "symbol {s} outside CDF support [{}, {}]",
                ch.min,
                ch.max()
            ))
        })?;
        enc.encode(ch.cum[(s - ch.min) as usize], f);
        Ok(())
    }

    fn decode_symbol(&self, i: usize, dec: &mut RangeDecoder) -> Result<i32> {
        let ch = self
            .channel(i)
            .map_err(|e| Error::DecodingError(alloc::format!("{e}")))?;
        let t = dec.target();
        // Last k with cum[k] <= t.
        let k = ch.cum.partition_point(|&c| c <= t) - 1;
        if k + 1 >= ch.cum.len() {
            return Err(Error::DecodingError("target past end of CDF".into()));
        }
        dec.consume(ch.cum[k], ch.cum[k + 1] - ch.cum[k])?;
        Ok(ch.min + k as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{range_decode, range_encode};
    use proptest::prelude::*;

    #[test]
    fn all_zero_samples_concentrate_mass() {
        let t = build_factorized_cdf(&[vec![0; 1000]]).unwrap();
        let ch = &t.channels[0];
        assert_eq!((ch.min, ch.max()), (-1, 1));
        assert!(ch.probability(0) >= 0.99);
        assert!(ch.frequency(-1).unwrap() > 0 && ch.frequency(1).unwrap() > 0);
    }

    #[test]
    fn uniform_samples_give_equal_intervals() {
        let samples: Vec<i32> = (0..900).map(|i| (i % 3) - 1).collect();
        let t = build_factorized_cdf(&[samples]).unwrap();
        let ch = &t.channels[0];
        let f: Vec<u32> = (-1..=1).map(|s| ch.frequency(s).unwrap()).collect();
        let (lo, hi) = (f.iter().min().unwrap(), f.iter().max().unwrap());
        assert!(hi - lo <= 2, "{f:?}");
        assert!(ch.probability(-2) < 0.01 && ch.probability(2) < 0.01);
    }

    #[test]
    fn empty_channel_rejected() {
        assert!(matches!(
            build_factorized_cdf(&[vec![1], vec![]]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn serialization_round_trip_and_coding() {
        let samples = vec![vec![-3, 0, 0, 1, 2, 2, 2], vec![5; 10]];
        let t = build_factorized_cdf(&samples).unwrap();
        let mut bytes = t.to_bytes();
        bytes.extend_from_slice(&[9, 9]);
        let (back, used) = CdfTable::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(used, bytes.len() - 2);

        let symbols: Vec<i32> = samples.iter().flat_map(|s| s.iter().copied().take(7)).collect();
        let coder = t.coder(7);
        let stream = range_encode(&symbols, &coder).unwrap();
        assert_eq!(range_decode(&stream, &coder, symbols.len()).unwrap(), symbols);

        assert!(matches!(range_encode(&[100], &coder), Err(Error::EncodingError(_))));
    }

    #[test]
    fn truncated_table_rejected() {
        let t = build_factorized_cdf(&[vec![0, 1, 2, 3]]).unwrap();
        let bytes = t.to_bytes();
        for n in 0..bytes.len() {
            assert!(CdfTable::from_bytes(&bytes[..n]).is_err());
        }
    }

    proptest! {
        #[test]
        fn tables_are_valid(samples in prop::collection::vec(
            prop::collection::vec(-300i32..300, 1..200), 1..4)) {
            let t = build_factorized_cdf(&samples).unwrap();
            for ch in &t.channels {
                prop_assert!(ch.validate().is_ok());
            }
        }
    }
}
