//! Label histograms, keyword verdicts and expert agreement.

mod agreement;
mod report;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{agreement, pair_rows, parse_verdict_rows, truncate_2dp, Agreement, VerdictRow};
pub use report::{AssessmentReport, Timings};

use crate::infer::TilePrediction;
use crate::label::{Label, NUM_LABELS};

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("no tile predictions")]
    EmptyGrid,
    #[error("{system} system verdicts but {experts} expert verdicts")]
    LengthMismatch { system: usize, experts: usize },
    #[error("slide `{0}` has no matching expert verdict")]
    UnknownSlide(String),
    #[error("invalid verdict: {0}")]
    Verdict(String),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("invalid report: {0}")]
    Report(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = AssessError> = std::result::Result<T, E>;

/// Counts of top-1 labels over a slide.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelHistogram {
    pub counts: [u64; NUM_LABELS],
}

impl LabelHistogram {
    pub fn from_counts(counts: [u64; NUM_LABELS]) -> Result<Self> {
        if counts.iter().sum::<u64>() == 0 {
            return Err(AssessError::EmptyGrid);
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, label: Label) -> u64 {
        self.counts[label.index()]
    }

    pub fn ratio(&self, label: Label) -> f64 {
        self.count(label) as f64 / self.total() as f64
    }

    pub fn ratios(&self) -> [f64; NUM_LABELS] {
        Label::ALL.map(|l| self.ratio(l))
    }

    /// Tiles that are not `Empty`.
    pub fn non_empty(&self) -> u64 {
        self.total() - self.count(Label::Empty)
    }
}

pub fn histogram(predictions: &[TilePrediction]) -> Result<LabelHistogram> {
    let mut counts = [0u64; NUM_LABELS];
    for p in predictions {
        counts[p.l1.index()] += 1;
    }
    LabelHistogram::from_counts(counts)
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident),* }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name { $($variant),* }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => stringify!($variant)),* }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = AssessError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $(stringify!($variant) => Ok($name::$variant),)*
                    other => Err(AssessError::Verdict(format!(
                        "`{other}` is not a {} keyword", stringify!($name)
                    ))),
                }
            }
        }
    };
}

keyword_enum!(Staining { Good, Average, Bad });
keyword_enum!(Density { High, Average, Low });
keyword_enum!(Damage { Low, Average, Severe });

/// One keyword per assessed attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Verdicts {
    pub staining: Staining,
    pub density: Density,
    pub damage: Damage,
}

impl Verdicts {
    /// Attribute-wise matches against another verdict set, out of 3.
    pub fn matches(&self, other: &Verdicts) -> u32 {
        (self.staining == other.staining) as u32
            + (self.density == other.density) as u32
            + (self.damage == other.damage) as u32
    }
}

/// Lower edges of the middle and worse bands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub average: f64,
    pub worst: f64,
}

/// Cut points on label ratios among non-Empty tiles.
///
/// Staining uses the Crystalized ratio, damage the Damaged ratio, density
/// the share of Dense, EpiOnly, LeukOnly and Edge tiles. A ratio sitting
/// exactly on a cut point takes the higher band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Good < average ≤ Average < worst ≤ Bad
    pub staining: Band,
    /// Low < average ≤ Average < worst ≤ Severe
    pub damage: Band,
    /// Low < average ≤ Average < high ≤ High
    pub density_average: f64,
    pub density_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            staining: Band {
                average: 0.05,
                worst: 0.15,
            },
            damage: Band {
                average: 0.05,
                worst: 0.15,
            },
            density_average: 0.15,
            density_high: 0.40,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let ordered = |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if !ordered(self.staining.average, self.staining.worst)
            || !ordered(self.damage.average, self.damage.worst)
            || !ordered(self.density_average, self.density_high)
        {
            return Err(AssessError::Thresholds(
                "cut points must lie in [0, 1] in ascending order".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let t: Thresholds =
            serde_json::from_str(json).map_err(|e| AssessError::Thresholds(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| AssessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Keyword verdicts plus whether every tile was `Empty`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerdictOutcome {
    pub verdicts: Verdicts,
    pub all_empty: bool,
}

pub fn verdicts(hist: &LabelHistogram, thresholds: &Thresholds) -> VerdictOutcome {
    let non_empty = hist.non_empty();
    if non_empty == 0 {
        return VerdictOutcome {
            verdicts: Verdicts {
                staining: Staining::Bad,
                density: Density::Low,
                damage: Damage::Low,
            },
            all_empty: true,
        };
    }
    let share = |n: u64| n as f64 / non_empty as f64;
    let crystal = share(hist.count(Label::Crystalized));
    let damaged = share(hist.count(Label::Damaged));
    let informative = share(
        [Label::Dense, Label::EpiOnly, Label::LeukOnly, Label::Edge]
            .iter()
            .map(|&l| hist.count(l))
            .sum(),
    );
    let staining = if crystal >= thresholds.staining.worst {
        Staining::Bad
    } else if crystal >= thresholds.staining.average {
        Staining::Average
    } else {
        Staining::Good
    };
    let damage = if damaged >= thresholds.damage.worst {
        Damage::Severe
    } else if damaged >= thresholds.damage.average {
        Damage::Average
    } else {
        Damage::Low
    };
    let density = if informative >= thresholds.density_high {
        Density::High
    } else if informative >= thresholds.density_average {
        Density::Average
    } else {
        Density::Low
    };
    VerdictOutcome {
        verdicts: Verdicts {
            staining,
            density,
            damage,
        },
        all_empty: false,
    }
}
