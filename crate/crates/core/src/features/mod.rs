//! Hand-crafted texture baselines (HOG, color LBP) and their linear classifier.

mod hog;
mod lbp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hog::{cell_histograms, hog_features, hog_len, HOG_BINS, HOG_BLOCK, HOG_CELL, L2_HYS_CLIP};
pub use lbp::{color_lbp_counts, color_lbp_features, lbp_code, uniform_bins, COLOR_LBP_LEN, LBP_BINS};

use crate::infer::{
    finetune_head, Architecture, FeatureSource, InferError, ModelContainer, TilePrediction,
    TrainConfig, TrainReport, TrainingSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorId {
    Hog,
    ColorLbp,
}

impl DescriptorId {
    pub fn source(self) -> FeatureSource {
        match self {
            DescriptorId::Hog => FeatureSource::Hog,
            DescriptorId::ColorLbp => FeatureSource::ColorLbp,
        }
    }

    /// Feature length for a square patch of the given side.
    pub fn len(self, side: u32) -> Option<usize> {
        match self {
            DescriptorId::Hog => hog_len(side),
            DescriptorId::ColorLbp => (side >= 3).then_some(COLOR_LBP_LEN),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub descriptor: DescriptorId,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("patch side {side} is not a multiple of the {cell}-pixel cell")]
    CellMismatch { side: u32, cell: usize },
    #[error("patch side {side} below the minimum of {min}")]
    TooSmall { side: u32, min: u32 },
    #[error("model expects {expected:?} features, got {found:?}")]
    DescriptorMismatch {
        expected: FeatureSource,
        found: DescriptorId,
    },
    #[error(transparent)]
    Model(#[from] InferError),
}

/// A linear baseline is a container holding a single dense layer.
pub type LinearModel = ModelContainer;

/// Train a softmax classifier over `descriptor` features extracted from
/// `patch_size`-pixel patches. Uses the same optimizer as head fine-tuning.
pub fn train_linear(
    descriptor: DescriptorId,
    patch_size: u32,
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainReport), FeatureError> {
    let name = match descriptor {
        DescriptorId::Hog => "hog-linear",
        DescriptorId::ColorLbp => "color-lbp-linear",
    };
    let arch = Architecture::linear(name, descriptor.source(), patch_size, set.dim());
    let untrained = ModelContainer::initialize(arch, config.seed)?;
    Ok(finetune_head(&untrained, set, config)?)
}

pub fn classify_linear(model: &LinearModel, features: &FeatureVector) -> Result<TilePrediction, FeatureError> {
    let expected = model.architecture().features;
    if expected != features.descriptor.source() {
        return Err(FeatureError::DescriptorMismatch {
            expected,
            found: features.descriptor,
        });
    }
    let logits = model.head_logits(&features.values)?;
    Ok(TilePrediction::from_logits((0, 0), &logits)?)
}
