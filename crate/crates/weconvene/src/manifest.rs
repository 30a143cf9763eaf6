//! The `WCVM` model manifest.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "WCVM" | version u8 | index_len u32 | JSON index | f32 blob | CRC32 u32
//! ```
//!
//! The CRC covers every byte before it. The JSON index carries the
//! architecture hyperparameters (`N`, `M`, `Z`, `slices`, `wavelet`,
//! `lambda_index`, ...) and a `tensors` list of `{name, shape, offset}`
//! entries, where `offset` counts `f32` elements into the blob.
//!
//! Loading validates the container only. Whether every tensor the graph
//! needs is present is checked by [`ModelManifest::build_model`], which
//! reports the first missing name.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use weconvene_core::graph::Model;
use weconvene_core::weights::{MapWeights, ModelConfig, TensorRole, WeightSource};
use weconvene_core::WaveletKind;

use crate::{CodecError, Result};

pub const MANIFEST_MAGIC: &[u8; 4] = b"WCVM";
pub const MANIFEST_VERSION: u8 = 1;

/// Length of the model id stored in neural bitstreams.
pub const MODEL_ID_LEN: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "Z", default = "default_z")]
    z: usize,
    slices: usize,
    wavelet: u8,
    #[serde(default)]
    lambda_index: u32,
    #[serde(default = "default_charm_width")]
    charm_width: usize,
    #[serde(default = "default_subband_convs")]
    subband_convs: usize,
    #[serde(default = "default_slope")]
    leaky_slope: f32,
    #[serde(default = "default_true")]
    weconv: bool,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn default_z() -> usize {
    ModelConfig::default().z
}
fn default_charm_width() -> usize {
    ModelConfig::default().charm_width
}
fn default_subband_convs() -> usize {
    ModelConfig::default().subband_convs
}
fn default_slope() -> f32 {
    ModelConfig::default().leaky_slope
}
fn default_true() -> bool {
    true
}

/// Architecture hyperparameters plus named weight tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifest {
    pub config: ModelConfig,
    weights: MapWeights,
    id: [u8; MODEL_ID_LEN],
}

impl ModelManifest {
    pub fn new(config: ModelConfig, weights: MapWeights) -> Self {
        let mut m = ModelManifest {
            config,
            weights,
            id: [0; MODEL_ID_LEN],
        };
        m.id = digest(&m.to_bytes());
        m
    }

    /// Deterministic random weights for `config`: uniform kernels scaled by
    /// fan-in, zero biases, unit GDN beta and small non-negative gamma.
    pub fn random(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = MapWeights::from_specs(&config, |spec| {
            let n = spec.numel();
            match spec.role {
                TensorRole::Kernel { fan_in } => {
                    let a = (3.0 / fan_in as f32).sqrt();
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                }
                TensorRole::Bias => vec![0.0; n],
                TensorRole::GdnBeta => vec![1.0; n],
                TensorRole::GdnGamma => (0..n).map(|_| rng.gen_range(0.0..0.1)).collect(),
            }
        });
        ModelManifest::new(config, weights)
    }

    /// First 16 bytes of the SHA-256 of the serialized manifest.
    pub fn model_id(&self) -> [u8; MODEL_ID_LEN] {
        self.id
    }

    pub fn weights(&self) -> &MapWeights {
        &self.weights
    }

    pub fn tensor(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.weights.get(name)
    }

    pub fn build_model(&self) -> Result<Model> {
        Ok(Model::from_weights(self.config, &self.weights)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut offset = 0;
        let tensors = self
            .weights
            .tensors
            .iter()
            .map(|(name, (shape, data))| {
                let e = Entry {
                    name: name.clone(),
                    shape: shape.clone(),
                    offset,
                };
                offset += data.len();
                e
            })
            .collect();
        let index = Index {
            n: c.n,
            m: c.m,
            z: c.z,
            slices: c.slices,
            wavelet: c.wavelet.code(),
            lambda_index: c.lambda_index,
            charm_width: c.charm_width,
            subband_convs: c.subband_convs,
            leaky_slope: c.leaky_slope,
            weconv: c.weconv,
            tensors,
        };
        let json = serde_json::to_vec(&index).expect("index serializes");

        let mut out = Vec::with_capacity(13 + json.len() + 4 * offset);
        out.extend_from_slice(MANIFEST_MAGIC);
        out.push(MANIFEST_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, data) in self.weights.tensors.values() {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(MANIFEST_MAGIC) {
            return Err(CodecError::BadMagic { expected: "WCVM" });
        }
        let version = *bytes.get(4).ok_or_else(|| corrupt("truncated header"))?;
        if version != MANIFEST_VERSION {
            return Err(CodecError::VersionUnsupported(version));
        }
        if bytes.len() < 13 {
            return Err(corrupt("truncated header"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(corrupt(format!("checksum {stored:08x} != computed {actual:08x}")));
        }
        let index_len = u32::from_le_bytes(body[5..9].try_into().unwrap()) as usize;
        let json = body
            .get(9..9usize.saturating_add(index_len))
            .ok_or_else(|| corrupt("index length exceeds file"))?;
        let blob = &body[9 + index_len..];
        if blob.len() % 4 != 0 {
            return Err(corrupt(format!("blob length {} is not a multiple of 4", blob.len())));
        }
        let blob: Vec<f32> = blob
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();

        let index: Index = serde_json::from_slice(json).map_err(|e| CodecError::BadIndex(e.to_string()))?;
        let config = ModelConfig {
            n: index.n,
            m: index.m,
            z: index.z,
            slices: index.slices,
            charm_width: index.charm_width,
            subband_convs: index.subband_convs,
            leaky_slope: index.leaky_slope,
            weconv: index.weconv,
            wavelet: WaveletKind::from_code(index.wavelet)
                .ok_or_else(|| CodecError::BadIndex(format!("unknown wavelet code {}", index.wavelet)))?,
            lambda_index: index.lambda_index,
        };
        config.validate()?;

        let mut tensors = BTreeMap::new();
        for e in index.tensors {
            let numel = e
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n > 0)
                .ok_or_else(|| bad_shape(format!("{}: shape {:?}", e.name, e.shape)))?;
            let data = e
                .offset
                .checked_add(numel)
                .and_then(|end| blob.get(e.offset..end))
                .ok_or_else(|| bad_shape(format!("{}: extent beyond blob", e.name)))?;
            if tensors.insert(e.name.clone(), (e.shape, data.to_vec())).is_some() {
                return Err(CodecError::BadIndex(format!("duplicate tensor {:?}", e.name)));
            }
        }
        Ok(ModelManifest {
            config,
            weights: MapWeights { tensors },
            id: digest(bytes),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| CodecError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| CodecError::io(path, e))
    }
}

impl WeightSource for ModelManifest {
    fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.weights.get(name)
    }
}

fn digest(bytes: &[u8]) -> [u8; MODEL_ID_LEN] {
    let full = Sha256::digest(bytes);
    let mut id = [0; MODEL_ID_LEN];
    id.copy_from_slice(&full[..MODEL_ID_LEN]);
    id
}

fn corrupt(msg: impl Into<String>) -> CodecError {
    CodecError::CorruptBlob(msg.into())
}

fn bad_shape(msg: String) -> CodecError {
    CodecError::Core(weconvene_core::Error::BadShape(msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n: 4,
            m: 5,
            z: 2,
            slices: 5,
            charm_width: 4,
            subband_convs: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn serialization_is_stable() {
        let m = ModelManifest::random(tiny(), 3);
        let bytes = m.to_bytes();
        let back = ModelManifest::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        assert_ne!(ModelManifest::random(tiny(), 4).model_id(), m.model_id());
    }

    #[test]
    fn header_errors() {
        let mut bytes = ModelManifest::random(tiny(), 1).to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            ModelManifest::from_bytes(&bytes),
            Err(CodecError::VersionUnsupported(9))
        ));
        bytes[0] = b'X';
        assert!(matches!(
            ModelManifest::from_bytes(&bytes),
            Err(CodecError::BadMagic { .. })
        ));
        assert!(matches!(
            ModelManifest::from_bytes(b"WCVM\x01"),
            Err(CodecError::CorruptBlob(_))
        ));
    }
}
