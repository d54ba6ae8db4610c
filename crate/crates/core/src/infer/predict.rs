use serde::{Deserialize, Serialize};

use super::{InferError, Result};
use crate::label::{Label, NUM_LABELS};

/// Class probabilities of one tile and its two most likely labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilePrediction {
    pub tile_index: (usize, usize),
    pub probabilities: [f64; NUM_LABELS],
    pub l1: Label,
    pub l2: Label,
}

impl TilePrediction {
    /// Softmax over eight logits. Equal probabilities rank by label index.
    pub fn from_logits(tile_index: (usize, usize), logits: &[f32]) -> Result<Self> {
        if logits.len() != NUM_LABELS {
            return Err(InferError::FeatureDimension {
                expected: NUM_LABELS,
                found: logits.len(),
            });
        }
        let mut probabilities = [0.0; NUM_LABELS];
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        for (p, &z) in probabilities.iter_mut().zip(logits) {
            *p = (z as f64 - max).exp();
        }
        let sum: f64 = probabilities.iter().sum();
        probabilities.iter_mut().for_each(|p| *p /= sum);
        Ok(Self::from_probabilities(tile_index, probabilities))
    }

    pub fn from_probabilities(tile_index: (usize, usize), probabilities: [f64; NUM_LABELS]) -> Self {
        let [l1, l2] = top_two(&probabilities);
        Self {
            tile_index,
            probabilities,
            l1,
            l2,
        }
    }

    /// A prediction with all mass split between two labels, for building
    /// prediction grids by hand.
    pub fn with_top_two(tile_index: (usize, usize), l1: Label, l2: Label) -> Self {
        let mut probabilities = [0.0; NUM_LABELS];
        if l1 == l2 {
            probabilities[l1.index()] = 1.0;
            return Self {
                tile_index,
                probabilities,
                l1,
                l2,
            };
        }
        probabilities[l1.index()] = 0.7;
        probabilities[l2.index()] = 0.3;
        Self::from_probabilities(tile_index, probabilities)
    }

    pub fn probability(&self, label: Label) -> f64 {
        self.probabilities[label.index()]
    }
}

fn top_two(p: &[f64; NUM_LABELS]) -> [Label; 2] {
    let mut order: Vec<usize> = (0..NUM_LABELS).collect();
    // stable sort keeps ascending label index among ties
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    [
        Label::from_index(order[0]).unwrap(),
        Label::from_index(order[1]).unwrap(),
    ]
}
