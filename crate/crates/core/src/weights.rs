//! Model configuration and the tensor naming scheme shared by the graph
//! builder and the manifest format.
//!
//! Names are dotted paths: `ga.stageK.*` and `gs.stageK.*` for the analysis
//! and synthesis transforms, `ha.stageK.*` and `hs.stageK.*` for the hyper
//! transforms, and `charm.L.sliceI.*` / `charm.H.sliceI.*` for the slice
//! networks. Convolutions carry `.kernel` (`[out, in, k, k]`) and `.bias`;
//! GDN layers carry `.beta` (`[C]`) and `.gamma` (`[C, C]`).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{ConvParams, GdnParams, DEFAULT_LEAKY_SLOPE};
use crate::{Error, Result, WaveletKind};

/// Read access to named weight tensors.
pub trait WeightSource {
    /// Shape and row-major data of `name`, if present.
    fn get(&self, name: &str) -> Option<(&[usize], &[f32])>;
}

/// Simple in-memory weight store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapWeights {
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl MapWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.insert(name.into(), (shape, data));
    }

    /// Fills every tensor of `config` by calling `init(spec)`.
    pub fn from_specs(config: &ModelConfig, mut init: impl FnMut(&TensorSpec) -> Vec<f32>) -> Self {
        let mut w = MapWeights::new();
        for spec in tensor_specs(config) {
            let data = init(&spec);
            w.insert(spec.name.clone(), spec.shape.clone(), data);
        }
        w
    }
}

impl WeightSource for MapWeights {
    fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.tensors.get(name).map(|(s, d)| (s.as_slice(), d.as_slice()))
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Feature width of the analysis/synthesis transforms.
    pub n: usize,
    /// Latent channels per subband (`y_l` has `m`, `y_h` has `3m`).
    pub m: usize,
    /// Hyper-latent channels.
    pub z: usize,
    pub slices: usize,
    /// Hidden width of the slice networks.
    pub charm_width: usize,
    /// Convolutions per subband branch inside WeConv.
    pub subband_convs: usize,
    pub leaky_slope: f32,
    /// `false` replaces every WeConv/IWeConv by its stem and (I)GDN.
    pub weconv: bool,
    pub wavelet: WaveletKind,
    pub lambda_index: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n: 128,
            m: 320,
            z: 128,
            slices: 5,
            charm_width: 128,
            subband_convs: 2,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            weconv: true,
            wavelet: WaveletKind::Cdf53,
            lambda_index: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.n, self.m, self.z, self.slices, self.charm_width];
        if positive.contains(&0) {
            return Err(Error::BadShape("model widths must be positive".into()));
        }
        if !self.m.is_multiple_of(self.slices) {
            return Err(Error::ShapeMismatch(format!(
                "M = {} is not divisible into {} slices",
                self.m, self.slices
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::BadShape(format!(
                "leaky slope {} outside (0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Input channels of LF slice network `i`.
    pub fn lf_slice_inputs(&self, i: usize) -> usize {
        2 * self.m + i * (self.m / self.slices)
    }

    /// Input channels of HF slice network `i`.
    pub fn hf_slice_inputs(&self, i: usize) -> usize {
        6 * self.m + self.m + i * (3 * self.m / self.slices)
    }
}

/// What a named tensor parameterizes, for initialisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Kernel { fan_in: usize },
    Bias,
    GdnBeta,
    GdnGamma,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

struct SpecList(Vec<TensorSpec>);

impl SpecList {
    fn conv(&mut self, p: &str, out_ch: usize, in_ch: usize, k: usize) {
        self.0.push(TensorSpec {
            name: format!("{p}.kernel"),
            shape: vec![out_ch, in_ch, k, k],
            role: TensorRole::Kernel { fan_in: in_ch * k * k },
        });
        self.0.push(TensorSpec {
            name: format!("{p}.bias"),
            shape: vec![out_ch],
            role: TensorRole::Bias,
        });
    }

    fn gdn(&mut self, p: &str, c: usize) {
        self.0.push(TensorSpec {
            name: format!("{p}.beta"),
            shape: vec![c],
            role: TensorRole::GdnBeta,
        });
        self.0.push(TensorSpec {
            name: format!("{p}.gamma"),
            shape: vec![c, c],
            role: TensorRole::GdnGamma,
        });
    }

    fn weconv(&mut self, cfg: &ModelConfig, p: &str, in_ch: usize, out_ch: usize) {
        self.conv(p, out_ch, in_ch, 3);
        if cfg.weconv {
            for j in 0..cfg.subband_convs {
                self.conv(&format!("{p}.lf{j}"), out_ch, out_ch, 3);
            }
            for j in 0..cfg.subband_convs {
                self.conv(&format!("{p}.hf{j}"), 3 * out_ch, 3 * out_ch, 3);
            }
            self.conv(&format!("{p}.shortcut"), out_ch, in_ch, 1);
        }
        self.gdn(&format!("{p}.gdn"), out_ch);
    }

    fn resgroup(&mut self, p: &str, c: usize) {
        for b in 0..RES_BLOCKS {
            for j in 0..2 {
                self.conv(&format!("{p}.block{b}.conv{j}"), c, c, 3);
            }
        }
    }

    fn slice_net(&mut self, p: &str, in_ch: usize, width: usize, out_ch: usize) {
        self.conv(&format!("{p}.conv0"), width, in_ch, 3);
        self.conv(&format!("{p}.conv1"), width, width, 3);
        self.conv(&format!("{p}.conv2"), width, width, 3);
        self.conv(&format!("{p}.mu"), out_ch, width, 3);
        self.conv(&format!("{p}.sigma"), out_ch, width, 3);
    }
}

/// Residual blocks per ResGroup.
pub const RES_BLOCKS: usize = 3;

/// Every tensor the graph for `config` reads, in build order.
pub fn tensor_specs(config: &ModelConfig) -> Vec<TensorSpec> {
    let (n, m, z) = (config.n, config.m, config.z);
    let mut s = SpecList(Vec::new());

    s.weconv(config, "ga.stage0", 3, n);
    s.resgroup("ga.stage1", n);
    s.weconv(config, "ga.stage2", n, n);
    s.resgroup("ga.stage3", n);
    s.weconv(config, "ga.stage4", n, n);
    s.resgroup("ga.stage5", n);
    s.conv("ga.stage6", m, n, 3);

    s.conv("gs.stage0", n, m, 3);
    s.resgroup("gs.stage1", n);
    s.weconv(config, "gs.stage2", n, n);
    s.resgroup("gs.stage3", n);
    s.weconv(config, "gs.stage4", n, n);
    s.resgroup("gs.stage5", n);
    s.weconv(config, "gs.stage6", n, 3);

    s.conv("ha.stage0", n, 4 * m, 3);
    s.weconv(config, "ha.stage1", n, n);
    s.conv("ha.stage2", z, n, 3);

    s.conv("hs.stage0", n, z, 3);
    s.weconv(config, "hs.stage1", n, n);
    s.conv("hs.stage2", 8 * m, n, 3);

    let per = m / config.slices.max(1);
    for i in 0..config.slices {
        s.slice_net(
            &format!("charm.L.slice{i}"),
            config.lf_slice_inputs(i),
            config.charm_width,
            per,
        );
    }
    for i in 0..config.slices {
        s.slice_net(
            &format!("charm.H.slice{i}"),
            config.hf_slice_inputs(i),
            config.charm_width,
            3 * per,
        );
    }
    s.0
}

fn fetch<'a>(w: &'a dyn WeightSource, name: &str, shape: &[usize]) -> Result<&'a [f32]> {
    let (got_shape, data) = w.get(name).ok_or_else(|| Error::MissingTensor(name.into()))?;
    if got_shape != shape || data.len() != shape.iter().product::<usize>() {
        return Err(Error::BadShape(format!(
            "{name}: expected {shape:?}, found {got_shape:?}"
        )));
    }
    Ok(data)
}

/// Reads `{prefix}.kernel` / `{prefix}.bias` as a convolution.
pub fn load_conv(
    w: &dyn WeightSource,
    prefix: &str,
    out_ch: usize,
    in_ch: usize,
    stride: usize,
    transposed: bool,
) -> Result<ConvParams> {
    let kname = format!("{prefix}.kernel");
    let (shape, _) = w.get(&kname).ok_or_else(|| Error::MissingTensor(kname.clone()))?;
    let k = shape.get(2).copied().unwrap_or(0);
    let kernel = fetch(w, &kname, &[out_ch, in_ch, k, k])?.to_vec();
    let bias = fetch(w, &format!("{prefix}.bias"), &[out_ch])?.to_vec();
    ConvParams::new(kernel, bias, out_ch, in_ch, k, stride, transposed)
        .map_err(|e| Error::BadShape(format!("{prefix}: {e}")))
}

/// Reads `{prefix}.beta` / `{prefix}.gamma` as a (I)GDN layer.
pub fn load_gdn(w: &dyn WeightSource, prefix: &str, c: usize, inverse: bool) -> Result<GdnParams> {
    let beta = fetch(w, &format!("{prefix}.beta"), &[c])?.to_vec();
    let gamma = fetch(w, &format!("{prefix}.gamma"), &[c, c])?.to_vec();
    GdnParams::new(beta, gamma, inverse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let specs = tensor_specs(&ModelConfig::default());
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(names.contains(&"ga.stage0.kernel"));
        assert!(names.contains(&"charm.H.slice4.sigma.bias"));
    }

    #[test]
    fn baseline_drops_subband_branches() {
        let cfg = ModelConfig {
            weconv: false,
            ..ModelConfig::default()
        };
        let specs = tensor_specs(&cfg);
        assert!(specs
            .iter()
            .all(|s| !s.name.contains(".lf") && !s.name.contains("shortcut")));
        assert!(specs.iter().any(|s| s.name == "ga.stage0.gdn.gamma"));
    }

    #[test]
    fn slice_input_widths() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.lf_slice_inputs(0), 640);
        assert_eq!(cfg.lf_slice_inputs(4), 640 + 256);
        assert_eq!(cfg.hf_slice_inputs(0), 2240);
        assert_eq!(cfg.hf_slice_inputs(2), 2240 + 384);
    }

    #[test]
    fn missing_and_misshapen_tensors() {
        let mut w = MapWeights::new();
        assert_eq!(
            load_conv(&w, "ga.stage0", 1, 1, 1, false).unwrap_err(),
            Error::MissingTensor("ga.stage0.kernel".into())
        );
        w.insert("c.kernel", vec![2, 1, 3, 3], vec![0.0; 18]);
        w.insert("c.bias", vec![3], vec![0.0; 3]);
        assert!(matches!(load_conv(&w, "c", 2, 1, 1, false), Err(Error::BadShape(_))));
        w.insert("c.bias", vec![2], vec![0.0; 2]);
        let p = load_conv(&w, "c", 2, 1, 2, false).unwrap();
        assert_eq!((p.k, p.stride), (3, 2));
    }

    #[test]
    fn indivisible_slices_rejected() {
        let cfg = ModelConfig {
            m: 128,
            slices: 5,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::ShapeMismatch(_))));
    }
}
