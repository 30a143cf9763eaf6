//! Encode and decode drivers for both codec modes.
//!
//! Neural mode runs the analysis transform, codes the hyper-latent with a
//! per-channel factorized CDF built from the image (the table travels in
//! the z segment ahead of the range-coded symbols), then codes the LF and
//! HF latents slice by slice. Classical mode is a multi-level lifting
//! wavelet codec with one Gaussian scale per subband.
//!
//! Reported bpp counts every byte of the file, header included.

use std::path::Path;

use weconvene_core::classical::{classical_decode, classical_encode, ClassicalCoded, DEFAULT_LEVELS};
use weconvene_core::entropy::{
    build_factorized_cdf, quantize_clamped, range_decode, range_encode, CdfTable, RateReport, SYMBOL_BOUND,
};
use weconvene_core::graph::{normalize_image, padded_dims, LatentPair, Model, PAD_MULTIPLE};
use weconvene_core::wecharm::{encode_hf, encode_lf, CharmDecoder};
use weconvene_core::{Tensor, WaveletKind};

use crate::bitstream::{Bitstream, BitstreamHeader, ModeBlock, FLAG_WECONV};
use crate::image_io::{read_rgb, write_rgb};
use crate::manifest::ModelManifest;
use crate::{CodecError, Result};

/// A coded image.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub width: usize,
    pub height: usize,
    /// Model rate against range-coded payload, per stream.
    pub rate: RateReport,
}

impl Encoded {
    pub fn bpp(&self) -> f64 {
        bpp(self.bytes.len(), self.width, self.height)
    }
}

pub fn bpp(file_bytes: usize, width: usize, height: usize) -> f64 {
    8.0 * file_bytes as f64 / (width * height) as f64
}

fn check_pixels(pixels: &Tensor) -> Result<(u32, u32)> {
    let (c, h, w) = pixels.shape();
    if c != 3 || h == 0 || w == 0 {
        return Err(CodecError::Core(weconvene_core::Error::ShapeMismatch(format!(
            "expected a non-empty 3-channel image, got {:?}",
            pixels.shape()
        ))));
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| CodecError::InvalidArgument(format!("dimension {v} too large")));
    Ok((dim(w)?, dim(h)?))
}

/// A loaded model ready to encode and decode.
#[derive(Debug, Clone)]
pub struct NeuralCodec {
    manifest: ModelManifest,
    model: Model,
}

impl NeuralCodec {
    pub fn new(manifest: ModelManifest) -> Result<Self> {
        let model = manifest.build_model()?;
        Ok(NeuralCodec { manifest, model })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(ModelManifest::load(path)?)
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn header(&self, width: u32, height: u32) -> BitstreamHeader {
        let cfg = &self.manifest.config;
        BitstreamHeader {
            wavelet: cfg.wavelet,
            slices: cfg.slices as u8,
            width,
            height,
            mode: ModeBlock::Neural {
                model_id: self.manifest.model_id(),
                flags: if cfg.weconv { FLAG_WECONV } else { 0 },
            },
        }
    }

    /// Encodes a `3×H×W` image of pixel values in `[0, 255]`.
    pub fn encode(&self, pixels: &Tensor) -> Result<Encoded> {
        let (width, height) = check_pixels(pixels)?;
        let model = &self.model;
        let x = normalize_image(pixels)?;
        let y = model.analysis(&x)?;
        let z = model.hyper_analysis(&y)?;

        let zq = quantize_clamped(&z, &Tensor::zeros(z.channels(), z.height(), z.width()), SYMBOL_BOUND)?;
        let per = z.plane_len();
        let samples: Vec<Vec<i32>> = zq.chunks(per).map(<[i32]>::to_vec).collect();
        let table = build_factorized_cdf(&samples)?;
        let coder = table.coder(per);
        let z_stream = range_encode(&zq, &coder)?;
        let bits_z: f64 = zq
            .iter()
            .enumerate()
            .map(|(i, &s)| -coder.probability(i, s).log2())
            .sum();
        let mut z_seg = table.to_bytes();
        z_seg.extend_from_slice(&z_stream);

        let z_hat = Tensor::from_vec(
            z.channels(),
            z.height(),
            z.width(),
            zq.iter().map(|&v| v as f32).collect(),
        )?;
        let side = model.hyper_synthesis(&z_hat)?;
        let lf = encode_lf(&y.y_l, &side, model)?;
        let hf = encode_hf(&y.y_h, &lf.decoded, &side, model)?;

        let bs = Bitstream {
            header: self.header(width, height),
            z: z_seg,
            lf: lf.bytes,
            hf: hf.bytes,
        };
        Ok(Encoded {
            bytes: bs.to_bytes(),
            width: width as usize,
            height: height as usize,
            rate: RateReport {
                bits_yl: lf.estimated_bits,
                bits_yh: hf.estimated_bits,
                bits_z,
                bytes_yl: lf.payload_bytes,
                bytes_yh: hf.payload_bytes,
                bytes_z: z_stream.len(),
            },
        })
    }

    /// Decodes a neural bitstream to rounded pixels at the original size.
    pub fn decode(&self, bytes: &[u8]) -> Result<Tensor> {
        self.decode_stream(&Bitstream::from_bytes(bytes)?)
    }

    pub fn decode_stream(&self, bs: &Bitstream) -> Result<Tensor> {
        let h = &bs.header;
        let ModeBlock::Neural { model_id, flags } = h.mode else {
            return Err(CodecError::InvalidArgument("not a neural bitstream".into()));
        };
        let cfg = &self.manifest.config;
        if model_id != self.manifest.model_id() {
            return Err(CodecError::ModelMismatch(format!(
                "bitstream was coded with model {}, loaded model is {}",
                hex(&model_id),
                hex(&self.manifest.model_id())
            )));
        }
        if h.wavelet != cfg.wavelet || h.slices as usize != cfg.slices || (flags & FLAG_WECONV != 0) != cfg.weconv {
            return Err(CodecError::ModelMismatch(
                "header wavelet/slices/flags disagree with the model".into(),
            ));
        }
        let (width, height) = (h.width as usize, h.height as usize);
        let (ph, pw) = padded_dims(height, width);
        let (zc, zh, zw) = (cfg.z, ph / PAD_MULTIPLE, pw / PAD_MULTIPLE);

        let (table, used) = CdfTable::from_bytes(&bs.z)?;
        if table.channels.len() != zc {
            return Err(CodecError::decoding(format!(
                "z table has {} channels, model expects {zc}",
                table.channels.len()
            )));
        }
        let zq = range_decode(&bs.z[used..], &table.coder(zh * zw), zc * zh * zw)?;
        let z_hat = Tensor::from_vec(zc, zh, zw, zq.iter().map(|&v| v as f32).collect())?;

        let model = &self.model;
        let side = model.hyper_synthesis(&z_hat)?;
        let mut session = CharmDecoder::new(model, &side);
        let y_l = session.decode_lf(&bs.lf)?.clone();
        let y_h = session.decode_hf(&bs.hf)?;
        Ok(model.synthesis(&LatentPair::new(y_l, y_h)?, height, width)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalOptions {
    pub wavelet: WaveletKind,
    pub levels: usize,
    pub qstep: f32,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        ClassicalOptions {
            wavelet: WaveletKind::Cdf53,
            levels: DEFAULT_LEVELS,
            qstep: 8.0,
        }
    }
}

pub fn encode_classical(pixels: &Tensor, opts: &ClassicalOptions) -> Result<Encoded> {
    let (width, height) = check_pixels(pixels)?;
    let levels =
        u8::try_from(opts.levels).map_err(|_| CodecError::InvalidArgument(format!("{} levels", opts.levels)))?;
    let coded = classical_encode(pixels, opts.wavelet, opts.levels, opts.qstep)?;
    let sigma_table: Vec<u8> = coded.sigmas.iter().flat_map(|s| s.to_le_bytes()).collect();
    let bs = Bitstream {
        header: BitstreamHeader {
            wavelet: opts.wavelet,
            slices: 0,
            width,
            height,
            mode: ModeBlock::Classical {
                qstep: opts.qstep,
                levels,
            },
        },
        z: sigma_table,
        lf: coded.lf.clone(),
        hf: coded.hf.clone(),
    };
    Ok(Encoded {
        bytes: bs.to_bytes(),
        width: width as usize,
        height: height as usize,
        rate: RateReport {
            bits_yl: coded.estimated_bits_lf,
            bits_yh: coded.estimated_bits_hf,
            bits_z: 0.0,
            bytes_yl: coded.lf.len(),
            bytes_yh: coded.hf.len(),
            bytes_z: 0,
        },
    })
}

pub fn decode_classical_stream(bs: &Bitstream) -> Result<Tensor> {
    let h = &bs.header;
    let ModeBlock::Classical { qstep, levels } = h.mode else {
        return Err(CodecError::InvalidArgument("not a classical bitstream".into()));
    };
    if !bs.z.len().is_multiple_of(4) {
        return Err(CodecError::decoding("sigma table length is not a multiple of 4"));
    }
    let coded = ClassicalCoded {
        wavelet: h.wavelet,
        levels: levels as usize,
        channels: 3,
        height: h.height as usize,
        width: h.width as usize,
        qstep,
        sigmas: bs
            .z
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect(),
        lf: bs.lf.clone(),
        hf: bs.hf.clone(),
        estimated_bits_lf: 0.0,
        estimated_bits_hf: 0.0,
    };
    Ok(classical_decode(&coded)?)
}

/// Decodes either mode. Neural bitstreams need `codec`.
pub fn decode(bytes: &[u8], codec: Option<&NeuralCodec>) -> Result<Tensor> {
    let bs = Bitstream::from_bytes(bytes)?;
    match (bs.header.mode, codec) {
        (ModeBlock::Classical { .. }, _) => decode_classical_stream(&bs),
        (ModeBlock::Neural { .. }, Some(codec)) => codec.decode_stream(&bs),
        (ModeBlock::Neural { .. }, None) => Err(CodecError::ModelMismatch(
            "neural bitstream needs a model manifest".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EncodeMode<'a> {
    Neural(&'a NeuralCodec),
    Classical(ClassicalOptions),
}

pub fn encode_image(pixels: &Tensor, mode: EncodeMode<'_>) -> Result<Encoded> {
    match mode {
        EncodeMode::Neural(codec) => codec.encode(pixels),
        EncodeMode::Classical(opts) => encode_classical(pixels, &opts),
    }
}

/// Encodes an image file and writes the bitstream.
pub fn encode_file(image_path: impl AsRef<Path>, out_path: impl AsRef<Path>, mode: EncodeMode<'_>) -> Result<Encoded> {
    let pixels = read_rgb(image_path)?;
    let enc = encode_image(&pixels, mode)?;
    let out = out_path.as_ref();
    std::fs::write(out, &enc.bytes).map_err(|e| CodecError::io(out, e))?;
    Ok(enc)
}

/// Decodes a bitstream file and writes the reconstruction.
pub fn decode_file(
    bitstream_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    codec: Option<&NeuralCodec>,
) -> Result<Tensor> {
    let path = bitstream_path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| CodecError::io(path, e))?;
    let img = decode(&bytes, codec)?;
    write_rgb(out_path, &img)?;
    Ok(img)
}
