//! The eight fine-grained region classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NUM_LABELS: usize = 8;

/// Region class of a slide tile.
///
/// Discriminants follow alphabetical order, which is also the tie-break
/// order used when two classes receive the same probability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Staining dye crystalized on the slide.
    Crystalized = 0,
    /// Scratched or otherwise physically damaged region.
    Damaged = 1,
    /// Many epithelial cells and leukocytes; the most informative region.
    Dense = 2,
    /// Dirt, hair or dust.
    Dirt = 3,
    /// Border of the tissue area.
    Edge = 4,
    /// Empty glass; the least informative region.
    Empty = 5,
    /// Three or fewer notable epithelial cells.
    EpiOnly = 6,
    /// A few notable leukocytes.
    LeukOnly = 7,
}

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [
        Label::Crystalized,
        Label::Damaged,
        Label::Dense,
        Label::Dirt,
        Label::Edge,
        Label::Empty,
        Label::EpiOnly,
        Label::LeukOnly,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Crystalized => "Crystalized",
            Label::Damaged => "Damaged",
            Label::Dense => "Dense",
            Label::Dirt => "Dirt",
            Label::Edge => "Edge",
            Label::Empty => "Empty",
            Label::EpiOnly => "EpiOnly",
            Label::LeukOnly => "LeukOnly",
        }
    }

    /// Canonical label names in index order.
    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|l| l.name().to_string()).collect()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown region label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}
