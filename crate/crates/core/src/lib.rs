//! Slide quality assessment: tile classification, information-density heat
//! maps and keyword verdicts for stained microscopy slides.

pub mod assessment;
pub mod bench;
pub mod density;
pub mod features;
pub mod fixtures;
pub mod infer;
pub mod label;
pub mod pipeline;
pub mod slide_io;

pub use label::{Label, NUM_LABELS};
