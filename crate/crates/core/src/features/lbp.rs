//! Uniform LBP(8,1) histograms computed independently on R, G and B.

use std::sync::OnceLock;

use super::{DescriptorId, FeatureError, FeatureVector};
use crate::slide_io::Patch;

/// 58 uniform patterns plus one bin for everything else.
pub const LBP_BINS: usize = 59;
pub const COLOR_LBP_LEN: usize = 3 * LBP_BINS;

/// Neighbour offsets, clockwise from the top-left.
const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

/// Histogram bin of every 8-bit code: uniform codes (at most two circular
/// 0/1 transitions) get bins 0..58 in ascending code order, the rest bin 58.
pub fn uniform_bins() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [(LBP_BINS - 1) as u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if transitions(code) <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next as usize, LBP_BINS - 1);
        table
    })
}

/// LBP code at an interior pixel of one channel. Bit `n` is set when
/// neighbour `n` is strictly brighter than the centre.
pub fn lbp_code(patch: &Patch, x: usize, y: usize, channel: usize) -> u8 {
    let center = patch.pixel(x, y)[channel];
    NEIGHBORS.iter().enumerate().fold(0u8, |code, (bit, &(dx, dy))| {
        let v = patch.pixel((x as isize + dx) as usize, (y as isize + dy) as usize)[channel];
        code | (((v > center) as u8) << bit)
    })
}

/// Raw per-channel counts; each channel sums to `(side − 2)²`.
pub fn color_lbp_counts(patch: &Patch) -> Result<[[u32; LBP_BINS]; 3], FeatureError> {
    let side = patch.size() as usize;
    if side < 3 {
        return Err(FeatureError::TooSmall {
            side: patch.size(),
            min: 3,
        });
    }
    let bins = uniform_bins();
    let mut counts = [[0u32; LBP_BINS]; 3];
    for y in 1..side - 1 {
        for x in 1..side - 1 {
            for (c, hist) in counts.iter_mut().enumerate() {
                hist[bins[lbp_code(patch, x, y, c) as usize] as usize] += 1;
            }
        }
    }
    Ok(counts)
}

/// Concatenated R, G, B histograms, each L1-normalized.
pub fn color_lbp_features(patch: &Patch) -> Result<FeatureVector, FeatureError> {
    let counts = color_lbp_counts(patch)?;
    let interior = ((patch.size() - 2) as f64).powi(2);
    let values = counts
        .iter()
        .flat_map(|h| h.iter().map(move |&c| (c as f64 / interior) as f32))
        .collect();
    Ok(FeatureVector {
        values,
        descriptor: DescriptorId::ColorLbp,
    })
}
