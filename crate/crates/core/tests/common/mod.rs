#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weconvene_core::graph::Model;
use weconvene_core::weights::{MapWeights, ModelConfig, TensorRole};
use weconvene_core::Tensor;

pub fn small_config(slices: usize) -> ModelConfig {
    ModelConfig {
        n: 8,
        m: 10,
        z: 4,
        slices,
        charm_width: 8,
        subband_convs: 2,
        ..ModelConfig::default()
    }
}

pub fn random_weights(cfg: &ModelConfig, seed: u64, zero_bias: bool) -> MapWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MapWeights::from_specs(cfg, |spec| {
        let n = spec.numel();
        match spec.role {
            TensorRole::Kernel { fan_in } => {
                let a = (3.0 / fan_in as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            }
            TensorRole::Bias if zero_bias => vec![0.0; n],
            TensorRole::Bias => (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect(),
            TensorRole::GdnBeta => vec![1.0; n],
            TensorRole::GdnGamma => (0..n).map(|_| rng.gen_range(0.0..0.1)).collect(),
        }
    })
}

pub fn random_model(cfg: ModelConfig, seed: u64) -> Model {
    Model::from_weights(cfg, &random_weights(&cfg, seed, false)).unwrap()
}

pub fn random_tensor(c: usize, h: usize, w: usize, scale: f32, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..c * h * w).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_vec(c, h, w, data).unwrap()
}
