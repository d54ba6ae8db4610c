//! Depthwise-separable CNN inference, its serialized container, MAC
//! accounting and last-layer training.

pub mod conv;
pub mod cost;
pub mod model;
pub mod predict;
pub mod train;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use conv::{
    depthwise_conv, depthwise_separable_conv, pointwise_conv, standard_conv, ConvKernel,
    DepthwiseKernel, FeatureMap, PointwiseKernel,
};
pub use cost::{flop_cost, network_cost, CostRow, MacCost, NetworkCost};
pub use model::{
    classify_patch, load_model, Activation, Architecture, ConvLayerSpec, FeatureSource, LayerKind,
    ModelContainer, Preprocess,
};
pub use predict::TilePrediction;
pub use train::{
    accuracy, cross_entropy, finetune_head, fit, head_gradient, AdamConfig, HeadGradient,
    SoftmaxHead, TrainConfig, TrainReport, TrainingSet,
};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("{0} layers have no convolution cost")]
    NonSpatialLayer(LayerKind),
    #[error("not a model container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("tensor payload is {found} bytes, architecture needs {expected}")]
    TensorBytes { expected: usize, found: usize },
    #[error("{labels} labels for a {outputs}-way head")]
    LabelCount { labels: usize, outputs: usize },
    #[error("invalid architecture descriptor: {0}")]
    Descriptor(String),
    #[error("feature length {found}, expected {expected}")]
    FeatureDimension { expected: usize, found: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {label} outside the {classes}-class set")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training: {0}")]
    Training(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = InferError> = std::result::Result<T, E>;
