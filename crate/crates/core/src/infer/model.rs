//! Architecture descriptors, the `SLNW` model container and the forward pass.
//!
//! Container layout (little-endian):
//!
//! ```text
//! "SLNW" | u32 version (=1) | u32 n | n bytes of JSON architecture | f32 tensors
//! ```
//!
//! Tensors follow layer order: spatial kernels `[ky][kx][in][out]`
//! (depthwise `[ky][kx][channel]`), dense layers `[in][out]` then bias `[out]`.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{self, FeatureMap};
use super::predict::TilePrediction;
use super::{InferError, Result};
use crate::features;
use crate::label::{Label, NUM_LABELS};
use crate::slide_io::Patch;

pub const MAGIC: &[u8; 4] = b"SLNW";
pub const VERSION: u32 = 1;

const SLIDENET_128: &str = include_str!("../../descriptors/slidenet-128.json");
const SLIDENET_224: &str = include_str!("../../descriptors/slidenet-224.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Standard,
    Depthwise,
    Pointwise,
    Dense,
    GlobalAvgPool,
    Softmax,
}

impl LayerKind {
    pub fn is_spatial(self) -> bool {
        matches!(
            self,
            LayerKind::Standard | LayerKind::Depthwise | LayerKind::Pointwise
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Standard => "standard",
            LayerKind::Depthwise => "depthwise",
            LayerKind::Pointwise => "pointwise",
            LayerKind::Dense => "dense",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Softmax => "softmax",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    None,
}

fn default_stride() -> usize {
    1
}

/// One layer of the network. `kernel` is `D_K`, `in`/`out` are `M`/`N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub kernel: usize,
    #[serde(rename = "in", default)]
    pub in_channels: usize,
    #[serde(rename = "out", default)]
    pub out_channels: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl ConvLayerSpec {
    /// Number of f32 parameters stored for this layer.
    pub fn param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        match self.kind {
            LayerKind::Standard => k2 * self.in_channels * self.out_channels,
            LayerKind::Depthwise => k2 * self.in_channels,
            LayerKind::Pointwise => self.in_channels * self.out_channels,
            LayerKind::Dense => self.in_channels * self.out_channels + self.out_channels,
            LayerKind::GlobalAvgPool | LayerKind::Softmax => 0,
        }
    }
}

/// Where the head's input vector comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Activations of the convolutional stack.
    #[default]
    Cnn,
    Hog,
    ColorLbp,
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSource::Cnn => "cnn",
            FeatureSource::Hog => "hog",
            FeatureSource::ColorLbp => "color-lbp",
        })
    }
}

/// Input normalization `value = pixel · scale + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub scale: f32,
    pub shift: f32,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            scale: 1.0 / 127.5,
            shift: -1.0,
        }
    }
}

/// JSON architecture descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub labels: Vec<String>,
    pub input_size: u32,
    #[serde(default)]
    pub features: FeatureSource,
    #[serde(default)]
    pub preprocess: Preprocess,
    pub layers: Vec<ConvLayerSpec>,
}

impl Architecture {
    /// One of the shipped reference descriptors, `slidenet-128` or `slidenet-224`.
    pub fn reference(name: &str) -> Option<Architecture> {
        let src = match name {
            "slidenet-128" => SLIDENET_128,
            "slidenet-224" => SLIDENET_224,
            _ => return None,
        };
        Some(serde_json::from_str(src).expect("bundled descriptor is valid JSON"))
    }

    pub fn from_json(json: &str) -> Result<Architecture> {
        let arch: Architecture =
            serde_json::from_str(json).map_err(|e| InferError::Descriptor(e.to_string()))?;
        arch.validate()?;
        Ok(arch)
    }

    /// A single dense layer plus softmax over a fixed-length feature vector.
    pub fn linear(name: &str, features: FeatureSource, input_size: u32, dim: usize) -> Architecture {
        Architecture {
            name: name.to_string(),
            labels: Label::names(),
            input_size,
            features,
            preprocess: Preprocess::default(),
            layers: vec![
                ConvLayerSpec {
                    kind: LayerKind::Dense,
                    kernel: 0,
                    in_channels: dim,
                    out_channels: NUM_LABELS,
                    stride: 1,
                    activation: Activation::None,
                },
                ConvLayerSpec {
                    kind: LayerKind::Softmax,
                    kernel: 0,
                    in_channels: NUM_LABELS,
                    out_channels: NUM_LABELS,
                    stride: 1,
                    activation: Activation::None,
                },
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayerSpec::param_count).sum()
    }

    /// Index of the trainable head (the last dense layer).
    pub fn head_index(&self) -> usize {
        self.layers.len() - 2
    }

    /// Check layer chaining, kernel geometry and the label/head agreement.
    pub fn validate(&self) -> Result<()> {
        let n = self.layers.len();
        if n < 2
            || self.layers[n - 1].kind != LayerKind::Softmax
            || self.layers[n - 2].kind != LayerKind::Dense
        {
            return Err(InferError::InvalidLayer(
                "network must end with a dense layer followed by softmax".into(),
            ));
        }
        if self.input_size == 0 {
            return Err(InferError::Descriptor("input_size must be positive".into()));
        }
        let head_out = self.layers[n - 2].out_channels;
        if self.labels.len() != head_out {
            return Err(InferError::LabelCount {
                labels: self.labels.len(),
                outputs: head_out,
            });
        }
        if self.labels != Label::names() {
            return Err(InferError::Descriptor(format!(
                "labels must be {:?} in that order",
                Label::names()
            )));
        }

        let (mut channels, mut side) = match self.features {
            FeatureSource::Cnn => (3usize, self.input_size as usize),
            FeatureSource::Hog => (
                features::hog_len(self.input_size).ok_or_else(|| {
                    InferError::Descriptor(format!(
                        "HOG needs an input size divisible by {} and at least two cells, got {}",
                        features::HOG_CELL,
                        self.input_size
                    ))
                })?,
                1,
            ),
            FeatureSource::ColorLbp if self.input_size < 3 => {
                return Err(InferError::Descriptor("color LBP needs an input of at least 3x3".into()))
            }
            FeatureSource::ColorLbp => (features::COLOR_LBP_LEN, 1),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| InferError::InvalidLayer(format!("layer {i} ({}): {msg}", layer.kind));
            if layer.kind != LayerKind::Softmax && layer.in_channels != channels {
                return Err(InferError::ChannelMismatch {
                    expected: channels,
                    found: layer.in_channels,
                });
            }
            match layer.kind {
                LayerKind::Standard | LayerKind::Depthwise | LayerKind::Pointwise => {
                    if side == 1 && self.features != FeatureSource::Cnn {
                        return Err(bad("spatial layer on a feature vector".into()));
                    }
                    if layer.kernel % 2 == 0 {
                        return Err(bad(format!("kernel {} must be odd", layer.kernel)));
                    }
                    if !(1..=2).contains(&layer.stride) {
                        return Err(bad(format!("stride {} not in {{1, 2}}", layer.stride)));
                    }
                    if layer.out_channels == 0 {
                        return Err(bad("zero output channels".into()));
                    }
                    if layer.kind == LayerKind::Depthwise && layer.out_channels != layer.in_channels {
                        return Err(bad("depthwise layers need out == in".into()));
                    }
                    if layer.kind == LayerKind::Pointwise && (layer.kernel != 1 || layer.stride != 1) {
                        return Err(bad("pointwise layers need kernel 1, stride 1".into()));
                    }
                    side = side.div_ceil(layer.stride);
                    channels = layer.out_channels;
                }
                LayerKind::GlobalAvgPool => {
                    if layer.out_channels != 0 && layer.out_channels != channels {
                        return Err(bad("pooling keeps the channel count".into()));
                    }
                    side = 1;
                }
                LayerKind::Dense => {
                    if side != 1 {
                        return Err(bad("dense layer needs a pooled input".into()));
                    }
                    if layer.out_channels == 0 {
                        return Err(bad("zero outputs".into()));
                    }
                    channels = layer.out_channels;
                }
                LayerKind::Softmax => {}
            }
        }
        Ok(())
    }
}

/// A validated architecture together with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContainer {
    arch: Architecture,
    /// One parameter buffer per layer (empty for parameter-free layers).
    params: Vec<Vec<f32>>,
}

impl ModelContainer {
    pub fn new(arch: Architecture, params: Vec<Vec<f32>>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.layers.len() {
            return Err(InferError::TensorBytes {
                expected: arch.layers.len(),
                found: params.len(),
            });
        }
        for (layer, p) in arch.layers.iter().zip(&params) {
            if p.len() != layer.param_count() {
                return Err(InferError::TensorBytes {
                    expected: layer.param_count() * 4,
                    found: p.len() * 4,
                });
            }
            conv::check_finite(p, "model weights")?;
        }
        Ok(Self { arch, params })
    }

    /// Seeded He-uniform convolution weights with a zeroed head.
    pub fn initialize(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = arch.head_index();
        let params = arch
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let fan_in = match layer.kind {
                    LayerKind::Standard => layer.kernel * layer.kernel * layer.in_channels,
                    LayerKind::Depthwise => layer.kernel * layer.kernel,
                    LayerKind::Pointwise | LayerKind::Dense => layer.in_channels,
                    _ => 1,
                };
                if i == head {
                    return vec![0.0; layer.param_count()];
                }
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                (0..layer.param_count())
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect()
            })
            .collect();
        Self::new(arch, params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn name(&self) -> &str {
        &self.arch.name
    }

    pub fn input_size(&self) -> u32 {
        self.arch.input_size
    }

    pub fn layer_params(&self, layer: usize) -> &[f32] {
        &self.params[layer]
    }

    /// Input dimension of the trainable head.
    pub fn feature_dim(&self) -> usize {
        self.arch.layers[self.arch.head_index()].in_channels
    }

    /// Head weights `[in][out]` and bias `[out]`.
    pub fn head(&self) -> (&[f32], &[f32]) {
        let layer = &self.arch.layers[self.arch.head_index()];
        self.params[self.arch.head_index()].split_at(layer.in_channels * layer.out_channels)
    }

    /// Copy of this container with a replaced head.
    pub fn with_head(&self, weights: &[f32], bias: &[f32]) -> Result<Self> {
        let idx = self.arch.head_index();
        let mut params = self.params.clone();
        params[idx] = weights.iter().chain(bias).copied().collect();
        Self::new(self.arch.clone(), params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_string(&self.arch).expect("architecture serializes");
        let mut out = Vec::with_capacity(12 + json.len() + self.arch.param_count() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(json.as_bytes());
        for p in &self.params {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(InferError::BadMagic);
        }
        let read_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| InferError::Descriptor("container header truncated".into()))
        };
        let version = read_u32(4)?;
        if version != VERSION {
            return Err(InferError::Version(version));
        }
        let json_len = read_u32(8)? as usize;
        let json = bytes
            .get(12..12 + json_len)
            .ok_or_else(|| InferError::Descriptor("architecture descriptor truncated".into()))?;
        let json = std::str::from_utf8(json).map_err(|e| InferError::Descriptor(e.to_string()))?;
        let arch = Architecture::from_json(json)?;

        let tensors = &bytes[12 + json_len..];
        let expected = arch.param_count() * 4;
        if tensors.len() != expected {
            return Err(InferError::TensorBytes {
                expected,
                found: tensors.len(),
            });
        }
        let mut floats = tensors
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let params = arch
            .layers
            .iter()
            .map(|l| floats.by_ref().take(l.param_count()).collect())
            .collect();
        Self::new(arch, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| InferError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Feature vector fed to the head.
    pub fn features(&self, patch: &Patch) -> Vec<f32> {
        let input = patch.resized(self.arch.input_size);
        match self.arch.features {
            FeatureSource::Hog => features::hog_features(&input)
                .expect("hog geometry checked at validation")
                .values,
            FeatureSource::ColorLbp => features::color_lbp_features(&input)
                .expect("lbp geometry checked at validation")
                .values,
            FeatureSource::Cnn => {
                let mut map = self.preprocess(&input);
                for i in 0..self.arch.head_index() {
                    map = self.apply_layer(i, map);
                }
                map.into_values()
            }
        }
    }

    fn preprocess(&self, patch: &Patch) -> FeatureMap {
        let Preprocess { scale, shift } = self.arch.preprocess;
        let data = patch.pixels().iter().map(|&p| p as f32 * scale + shift).collect();
        FeatureMap::new(patch.size() as usize, 3, data).expect("patch buffer is square RGB")
    }

    fn apply_layer(&self, index: usize, input: FeatureMap) -> FeatureMap {
        let layer = &self.arch.layers[index];
        let w = &self.params[index];
        let mut out = match layer.kind {
            LayerKind::Standard => {
                conv::standard_conv_raw(&input, w, layer.kernel, layer.out_channels, layer.stride)
            }
            LayerKind::Depthwise => conv::depthwise_conv_raw(&input, w, layer.kernel, layer.stride),
            LayerKind::Pointwise => conv::pointwise_conv_raw(&input, w, layer.out_channels),
            LayerKind::GlobalAvgPool => input.global_average_pool(),
            LayerKind::Dense => {
                let mut out = FeatureMap::zeros(1, layer.out_channels);
                let logits = dense(input.values(), w, layer.out_channels);
                out.values_mut().copy_from_slice(&logits);
                out
            }
            LayerKind::Softmax => input,
        };
        if layer.activation == Activation::Relu {
            out.relu_in_place();
        }
        out
    }

    /// Head logits for a feature vector.
    pub fn head_logits(&self, features: &[f32]) -> Result<Vec<f32>> {
        let dim = self.feature_dim();
        if features.len() != dim {
            return Err(InferError::FeatureDimension {
                expected: dim,
                found: features.len(),
            });
        }
        let idx = self.arch.head_index();
        Ok(dense(features, &self.params[idx], self.arch.layers[idx].out_channels))
    }
}

/// `out[j] = bias[j] + Σ_i x[i]·w[i][j]`; `params` holds weights then bias.
fn dense(x: &[f32], params: &[f32], out: usize) -> Vec<f32> {
    let (w, bias) = params.split_at(x.len() * out);
    let mut acc = bias.to_vec();
    for (i, &v) in x.iter().enumerate() {
        for (a, &wv) in acc.iter_mut().zip(&w[i * out..(i + 1) * out]) {
            *a += v * wv;
        }
    }
    acc
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelContainer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| InferError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ModelContainer::from_bytes(&bytes)
}

/// Classify one patch. The patch is resampled to the model's input size.
pub fn classify_patch(model: &ModelContainer, patch: &Patch) -> Result<TilePrediction> {
    let features = model.features(patch);
    let logits = model.head_logits(&features)?;
    TilePrediction::from_logits(patch.tile_index, &logits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pointwise_only() -> Architecture {
        let mut arch = Architecture::reference("slidenet-128").unwrap();
        arch.name = "tiny".into();
        arch.input_size = 8;
        arch.layers = vec![
            ConvLayerSpec {
                kind: LayerKind::Pointwise,
                kernel: 1,
                in_channels: 3,
                out_channels: 4,
                stride: 1,
                activation: Activation::Relu,
            },
            ConvLayerSpec {
                kind: LayerKind::GlobalAvgPool,
                kernel: 0,
                in_channels: 4,
                out_channels: 4,
                stride: 1,
                activation: Activation::None,
            },
            ConvLayerSpec {
                kind: LayerKind::Dense,
                kernel: 0,
                in_channels: 4,
                out_channels: 8,
                stride: 1,
                activation: Activation::None,
            },
            ConvLayerSpec {
                kind: LayerKind::Softmax,
                kernel: 0,
                in_channels: 8,
                out_channels: 8,
                stride: 1,
                activation: Activation::None,
            },
        ];
        arch
    }

    #[test]
    fn reference_descriptors_validate() {
        for name in ["slidenet-128", "slidenet-224"] {
            let arch = Architecture::reference(name).unwrap();
            arch.validate().unwrap();
            assert_eq!(arch.name, name);
        }
        assert!(Architecture::reference("resnet").is_none());
    }

    #[test]
    fn minimal_container_round_trip() {
        let model = ModelContainer::initialize(pointwise_only(), 3).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"SLNW");
        let back = ModelContainer::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        let patch = Patch::new((0, 0), 8, vec![100; 192]).unwrap();
        let p = classify_patch(&back, &patch).unwrap();
        for &pr in &p.probabilities {
            assert!((pr - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn short_tensor_bytes() {
        let model = ModelContainer::initialize(pointwise_only(), 3).unwrap();
        let bytes = model.to_bytes();
        assert!(matches!(
            ModelContainer::from_bytes(&bytes[..bytes.len() - 4]),
            Err(InferError::TensorBytes { .. })
        ));
    }

    #[test]
    fn label_count_mismatch() {
        let mut arch = pointwise_only();
        arch.labels.pop();
        let model = ModelContainer {
            params: arch.layers.iter().map(|l| vec![0.0; l.param_count()]).collect(),
            arch,
        };
        assert!(matches!(
            ModelContainer::from_bytes(&model.to_bytes()),
            Err(InferError::LabelCount { labels: 7, outputs: 8 })
        ));
    }

    #[test]
    fn bad_magic_and_version() {
        let model = ModelContainer::initialize(pointwise_only(), 3).unwrap();
        let mut bytes = model.to_bytes();
        bytes[4] = 2;
        assert!(matches!(ModelContainer::from_bytes(&bytes), Err(InferError::Version(2))));
        bytes[0] = b'X';
        assert!(matches!(ModelContainer::from_bytes(&bytes), Err(InferError::BadMagic)));
    }

    #[test]
    fn chaining_is_checked() {
        let mut arch = pointwise_only();
        arch.layers[2].in_channels = 5;
        assert!(matches!(arch.validate(), Err(InferError::ChannelMismatch { .. })));
        let mut arch = pointwise_only();
        arch.layers[0].kernel = 3;
        assert!(matches!(arch.validate(), Err(InferError::InvalidLayer(_))));
    }
}
