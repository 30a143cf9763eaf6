//! The `WCVN` bitstream container.
//!
//! ```text
//! "WCVN" | version u8 | mode u8 | wavelet u8 | slices u8 | orig_w u32 | orig_h u32
//!        | mode block
//!        | z_len u32 | z bytes | lf_len u32 | LF bytes | hf_len u32 | HF bytes
//! ```
//!
//! The neural mode block is the 16-byte model id followed by a flags byte
//! (bit 0: WeConv layers enabled). The classical block is `qstep: f32`
//! followed by the decomposition depth `levels: u8`. In classical mode the
//! z segment carries the per-group sigma table as `f32` values.

use weconvene_core::WaveletKind;

use crate::manifest::MODEL_ID_LEN;
use crate::{CodecError, Result};

pub const MAGIC: &[u8; 4] = b"WCVN";
pub const VERSION: u8 = 1;

pub const FLAG_WECONV: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeBlock {
    Neural { model_id: [u8; MODEL_ID_LEN], flags: u8 },
    Classical { qstep: f32, levels: u8 },
}

impl ModeBlock {
    pub fn code(&self) -> u8 {
        match self {
            ModeBlock::Neural { .. } => 0,
            ModeBlock::Classical { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitstreamHeader {
    pub wavelet: WaveletKind,
    pub slices: u8,
    pub width: u32,
    pub height: u32,
    pub mode: ModeBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bitstream {
    pub header: BitstreamHeader,
    pub z: Vec<u8>,
    pub lf: Vec<u8>,
    pub hf: Vec<u8>,
}

impl Bitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(48 + self.z.len() + self.lf.len() + self.hf.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, h.mode.code(), h.wavelet.code(), h.slices]);
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        match h.mode {
            ModeBlock::Neural { model_id, flags } => {
                out.extend_from_slice(&model_id);
                out.push(flags);
            }
            ModeBlock::Classical { qstep, levels } => {
                out.extend_from_slice(&qstep.to_le_bytes());
                out.push(levels);
            }
        }
        for seg in [&self.z, &self.lf, &self.hf] {
            out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
            out.extend_from_slice(seg);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(CodecError::BadMagic { expected: "WCVN" });
        }
        r.take(4)?;
        let [version, mode, wavelet, slices] = r.array::<4>()?;
        if version != VERSION {
            return Err(CodecError::VersionUnsupported(version));
        }
        let wavelet = WaveletKind::from_code(wavelet)
            .ok_or_else(|| CodecError::decoding(format!("unknown wavelet code {wavelet}")))?;
        let width = r.u32()?;
        let height = r.u32()?;
        if width == 0 || height == 0 {
            return Err(CodecError::decoding(format!("image dimensions {width}x{height}")));
        }
        let mode = match mode {
            0 => {
                let model_id = r.array::<MODEL_ID_LEN>()?;
                let [flags] = r.array::<1>()?;
                ModeBlock::Neural { model_id, flags }
            }
            1 => {
                let qstep = f32::from_le_bytes(r.array::<4>()?);
                let [levels] = r.array::<1>()?;
                ModeBlock::Classical { qstep, levels }
            }
            m => return Err(CodecError::decoding(format!("unknown mode {m}"))),
        };
        let z = r.segment("z")?;
        let lf = r.segment("LF")?;
        let hf = r.segment("HF")?;
        if r.pos != bytes.len() {
            return Err(CodecError::decoding(format!(
                "{} trailing bytes after HF segment",
                bytes.len() - r.pos
            )));
        }
        Ok(Bitstream {
            header: BitstreamHeader {
                wavelet,
                slices,
                width,
                height,
                mode,
            },
            z,
            lf,
            hf,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .pos
            .checked_add(n)
            .and_then(|end| self.bytes.get(self.pos..end))
            .ok_or_else(|| CodecError::decoding(format!("bitstream truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn segment(&mut self, name: &str) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        self.take(len)
            .map(<[u8]>::to_vec)
            .map_err(|_| CodecError::decoding(format!("{name} segment declares {len} bytes past end of stream")))
    }
}
