//! Histogram of oriented gradients: 9 unsigned bins, 8×8 cells,
//! 2×2-cell blocks at one-cell stride, L2-Hys block normalization.

use super::{DescriptorId, FeatureError, FeatureVector};
use crate::slide_io::Patch;

pub const HOG_BINS: usize = 9;
pub const HOG_CELL: usize = 8;
pub const HOG_BLOCK: usize = 2;
pub const L2_HYS_CLIP: f32 = 0.2;
const NORM_EPS: f32 = 1e-3;

/// Feature length for a square patch, or `None` if the side does not split
/// into at least `HOG_BLOCK` whole cells.
pub fn hog_len(side: u32) -> Option<usize> {
    let side = side as usize;
    if !side.is_multiple_of(HOG_CELL) || side / HOG_CELL < HOG_BLOCK {
        return None;
    }
    let blocks = side / HOG_CELL - HOG_BLOCK + 1;
    Some(blocks * blocks * HOG_BLOCK * HOG_BLOCK * HOG_BINS)
}

/// Per-pixel gradient magnitude and unsigned orientation in degrees, taken
/// from whichever color channel has the strongest gradient.
fn gradients(patch: &Patch) -> Vec<(f32, f32)> {
    let s = patch.size() as usize;
    let mut out = Vec::with_capacity(s * s);
    for y in 0..s {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(s - 1));
        for x in 0..s {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(s - 1));
            let (l, r, u, d) = (
                patch.pixel(left, y),
                patch.pixel(right, y),
                patch.pixel(x, up),
                patch.pixel(x, down),
            );
            let mut best = (0.0f32, 0.0f32, 0.0f32);
            for c in 0..3 {
                let gx = r[c] as f32 - l[c] as f32;
                let gy = d[c] as f32 - u[c] as f32;
                let mag = (gx * gx + gy * gy).sqrt();
                if mag > best.0 {
                    best = (mag, gx, gy);
                }
            }
            let (mag, gx, gy) = best;
            let angle = if mag > 0.0 {
                gy.atan2(gx).to_degrees().rem_euclid(180.0)
            } else {
                0.0
            };
            out.push((mag, angle));
        }
    }
    out
}

/// Orientation histograms of every 8×8 cell, row-major over cells.
///
/// Bin `b` is centred on `20·b` degrees; votes split linearly between the
/// two nearest centres, wrapping at 180°.
pub fn cell_histograms(patch: &Patch) -> Result<Vec<[f32; HOG_BINS]>, FeatureError> {
    let side = patch.size() as usize;
    if !side.is_multiple_of(HOG_CELL) {
        return Err(FeatureError::CellMismatch {
            side: patch.size(),
            cell: HOG_CELL,
        });
    }
    let cells = side / HOG_CELL;
    let width = 180.0 / HOG_BINS as f32;
    let mut hist = vec![[0.0f32; HOG_BINS]; cells * cells];
    for (i, (mag, angle)) in gradients(patch).into_iter().enumerate() {
        if mag == 0.0 {
            continue;
        }
        let (y, x) = (i / side, i % side);
        let cell = &mut hist[(y / HOG_CELL) * cells + x / HOG_CELL];
        let pos = angle / width;
        let lower = pos.floor();
        let frac = pos - lower;
        let b0 = lower as usize % HOG_BINS;
        let b1 = (b0 + 1) % HOG_BINS;
        cell[b0] += mag * (1.0 - frac);
        cell[b1] += mag * frac;
    }
    Ok(hist)
}

fn l2_normalize(v: &mut [f32]) {
    let norm = (v.iter().map(|x| x * x).sum::<f32>() + NORM_EPS * NORM_EPS).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

pub fn hog_features(patch: &Patch) -> Result<FeatureVector, FeatureError> {
    let hist = cell_histograms(patch)?;
    let len = hog_len(patch.size()).ok_or(FeatureError::TooSmall {
        side: patch.size(),
        min: (HOG_CELL * HOG_BLOCK) as u32,
    })?;
    let cells = patch.size() as usize / HOG_CELL;
    let blocks = cells - HOG_BLOCK + 1;
    let mut values = Vec::with_capacity(len);
    for by in 0..blocks {
        for bx in 0..blocks {
            let start = values.len();
            for cy in by..by + HOG_BLOCK {
                for cx in bx..bx + HOG_BLOCK {
                    values.extend_from_slice(&hist[cy * cells + cx]);
                }
            }
            let block = &mut values[start..];
            l2_normalize(block);
            block.iter_mut().for_each(|v| *v = v.min(L2_HYS_CLIP));
            l2_normalize(block);
        }
    }
    debug_assert_eq!(values.len(), len);
    Ok(FeatureVector {
        values,
        descriptor: DescriptorId::Hog,
    })
}
