//! Seeded synthetic patches, slides and feature corpora.
//!
//! Each class gets its own palette and texture so the pipeline can be
//! exercised end to end without a real slide collection.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::infer::{InferError, TrainingSet};
use crate::label::{Label, NUM_LABELS};
use crate::slide_io::{self, Patch, SlideImage, SlideIoError};

pub const DEFAULT_SEED: u64 = 0x5eed;

struct Canvas {
    side: usize,
    px: Vec<[f32; 3]>,
}

impl Canvas {
    fn new(side: usize, rgb: [f32; 3]) -> Self {
        Self {
            side,
            px: vec![rgb; side * side],
        }
    }

    fn set(&mut self, x: i64, y: i64, rgb: [f32; 3]) {
        let s = self.side as i64;
        if (0..s).contains(&x) && (0..s).contains(&y) {
            self.px[y as usize * self.side + x as usize] = rgb;
        }
    }

    fn disk(&mut self, cx: f32, cy: f32, r: f32, rgb: [f32; 3]) {
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                if dx * dx + dy * dy <= r * r {
                    self.set(x, y, rgb);
                }
            }
        }
    }

    fn stroke(&mut self, from: (f32, f32), to: (f32, f32), width: f32, rgb: [f32; 3]) {
        let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f32 / steps as f32;
            let x = from.0 + t * (to.0 - from.0);
            let y = from.1 + t * (to.1 - from.1);
            self.disk(x, y, width / 2.0, rgb);
        }
    }

    fn noise(&mut self, rng: &mut ChaCha8Rng, amplitude: f32) {
        for p in &mut self.px {
            let n = rng.gen_range(-amplitude..=amplitude);
            for c in p.iter_mut() {
                *c += n;
            }
        }
    }

    fn into_patch(self) -> Patch {
        let pixels = self
            .px
            .iter()
            .flat_map(|p| p.map(|c| c.round().clamp(0.0, 255.0) as u8))
            .collect();
        Patch::new((0, 0), self.side as u32, pixels).expect("canvas is square RGB")
    }
}

const GLASS: [f32; 3] = [236.0, 233.0, 238.0];
const PALE: [f32; 3] = [228.0, 212.0, 224.0];
const TISSUE: [f32; 3] = [214.0, 160.0, 186.0];
const NUCLEUS: [f32; 3] = [86.0, 38.0, 120.0];

fn jitter(rng: &mut ChaCha8Rng, rgb: [f32; 3], amount: f32) -> [f32; 3] {
    rgb.map(|c| c + rng.gen_range(-amount..=amount))
}

fn random_point(rng: &mut ChaCha8Rng, side: f32) -> (f32, f32) {
    (rng.gen_range(0.0..side), rng.gen_range(0.0..side))
}

/// One synthetic patch of the given class.
pub fn generate_patch(label: Label, side: u32, rng: &mut ChaCha8Rng) -> Patch {
    let n = side as usize;
    let s = side as f32;
    let scale = s / 128.0;
    let area = (scale * scale).max(0.05);
    let count = |base: f32| ((base * area).round() as usize).max(1);
    let mut c;
    match label {
        Label::Empty => {
            c = Canvas::new(n, jitter(rng, GLASS, 3.0));
            c.noise(rng, 2.0);
        }
        Label::Dense => {
            c = Canvas::new(n, jitter(rng, TISSUE, 6.0));
            for _ in 0..count(60.0) {
                let (x, y) = random_point(rng, s);
                let r = rng.gen_range(2.5..5.0) * scale.max(0.5);
                c.disk(x, y, r, jitter(rng, NUCLEUS, 10.0));
            }
            c.noise(rng, 6.0);
        }
        Label::EpiOnly => {
            c = Canvas::new(n, jitter(rng, PALE, 4.0));
            for _ in 0..rng.gen_range(1..=3) {
                let (x, y) = random_point(rng, s);
                let r = rng.gen_range(14.0..22.0) * scale;
                c.disk(x, y, r, jitter(rng, [200.0, 138.0, 170.0], 8.0));
                c.disk(x, y, r * 0.3, jitter(rng, NUCLEUS, 8.0));
            }
            c.noise(rng, 4.0);
        }
        Label::LeukOnly => {
            c = Canvas::new(n, jitter(rng, PALE, 4.0));
            for _ in 0..rng.gen_range(4..=9) {
                let (x, y) = random_point(rng, s);
                let r = rng.gen_range(3.0..4.5) * scale.max(0.5);
                c.disk(x, y, r, jitter(rng, [64.0, 28.0, 104.0], 8.0));
            }
            c.noise(rng, 4.0);
        }
        Label::Edge => {
            c = Canvas::new(n, jitter(rng, GLASS, 3.0));
            let angle = rng.gen_range(0.0..std::f32::consts::TAU);
            let (nx, ny) = (angle.cos(), angle.sin());
            let offset = rng.gen_range(-0.15..0.15) * s;
            let tissue = jitter(rng, TISSUE, 6.0);
            for y in 0..n {
                for x in 0..n {
                    let d = (x as f32 - s / 2.0) * nx + (y as f32 - s / 2.0) * ny;
                    if d > offset {
                        c.px[y * n + x] = tissue;
                    }
                }
            }
            for _ in 0..count(20.0) {
                let (x, y) = random_point(rng, s);
                if (x - s / 2.0) * nx + (y - s / 2.0) * ny > offset + 4.0 {
                    c.disk(x, y, 3.0 * scale.max(0.5), jitter(rng, NUCLEUS, 10.0));
                }
            }
            c.noise(rng, 4.0);
        }
        Label::Damaged => {
            c = Canvas::new(n, jitter(rng, TISSUE, 6.0));
            for _ in 0..count(25.0) {
                let (x, y) = random_point(rng, s);
                c.disk(x, y, 3.0 * scale.max(0.5), jitter(rng, NUCLEUS, 10.0));
            }
            for _ in 0..rng.gen_range(3..=5) {
                let a = random_point(rng, s);
                let b = random_point(rng, s);
                c.stroke(a, b, rng.gen_range(3.0..6.0) * scale.max(0.5), [250.0, 250.0, 250.0]);
            }
            c.noise(rng, 5.0);
        }
        Label::Crystalized => {
            c = Canvas::new(n, jitter(rng, PALE, 4.0));
            for _ in 0..count(70.0) {
                let (x, y) = random_point(rng, s);
                let angle = rng.gen_range(0.0..std::f32::consts::PI);
                let len = rng.gen_range(4.0..10.0) * scale.max(0.5);
                let to = (x + len * angle.cos(), y + len * angle.sin());
                c.stroke((x, y), to, 1.0, jitter(rng, [96.0, 20.0, 150.0], 10.0));
            }
            c.noise(rng, 4.0);
        }
        Label::Dirt => {
            c = Canvas::new(n, jitter(rng, GLASS, 3.0));
            for _ in 0..rng.gen_range(2..=4) {
                let (x, y) = random_point(rng, s);
                let r = rng.gen_range(6.0..14.0) * scale;
                c.disk(x, y, r, jitter(rng, [70.0, 56.0, 40.0], 10.0));
            }
            let mut p = random_point(rng, s);
            for _ in 0..12 {
                let q = (
                    p.0 + rng.gen_range(-12.0..12.0) * scale,
                    p.1 + rng.gen_range(-12.0..12.0) * scale,
                );
                c.stroke(p, q, 1.5, [40.0, 34.0, 28.0]);
                p = q;
            }
            c.noise(rng, 3.0);
        }
    }
    c.into_patch()
}

/// `per_class` patches of every label, ordered by label then sample.
pub fn generate_corpus(per_class: usize, side: u32, seed: u64) -> Vec<(Label, Patch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Label::ALL
        .iter()
        .flat_map(|&l| (0..per_class).map(move |_| l))
        .map(|l| (l, generate_patch(l, side, &mut rng)))
        .collect()
}

/// Write a corpus as `dir/<Label>/<nnnn>.png`.
pub fn write_corpus(dir: &Path, corpus: &[(Label, Patch)]) -> Result<(), SlideIoError> {
    let mut seen = [0usize; NUM_LABELS];
    for (label, patch) in corpus {
        let sub = dir.join(label.name());
        std::fs::create_dir_all(&sub).map_err(|source| SlideIoError::Io {
            path: sub.clone(),
            source,
        })?;
        let n = &mut seen[label.index()];
        slide_io::write_image(&patch.to_image(), sub.join(format!("{:04}.png", *n)))?;
        *n += 1;
    }
    Ok(())
}

/// A slide assembled from `block`-sized class patches. Returns the slide
/// and the row-major label of each block.
pub fn generate_slide(
    width: u32,
    height: u32,
    block: u32,
    seed: u64,
) -> Result<(SlideImage, Vec<Label>), SlideIoError> {
    if block < slide_io::MIN_TILE_SIZE {
        return Err(SlideIoError::TileSize { tile: block });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = height.div_ceil(block);
    let cols = width.div_ceil(block);
    let mut data = vec![0u8; width as usize * height as usize * 3];
    let mut layout = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for col in 0..cols {
            // glass towards the border, tissue classes inside
            let border = r == 0 || col == 0 || r + 1 == rows || col + 1 == cols;
            let label = if border && rng.gen_bool(0.6) {
                Label::Empty
            } else {
                Label::ALL[rng.gen_range(0..NUM_LABELS)]
            };
            layout.push(label);
            let patch = generate_patch(label, block, &mut rng);
            for y in 0..block {
                let sy = r * block + y;
                if sy >= height {
                    break;
                }
                for x in 0..block {
                    let sx = col * block + x;
                    if sx >= width {
                        break;
                    }
                    let dst = (sy as usize * width as usize + sx as usize) * 3;
                    data[dst..dst + 3].copy_from_slice(&patch.pixel(x as usize, y as usize));
                }
            }
        }
    }
    Ok((SlideImage::new(width, height, data)?, layout))
}

/// Feature vectors whose class `c` has coordinate `c` in [2, 4] and every
/// other coordinate in [-1, 1], so `argmax` over the first eight
/// coordinates separates the classes with margin.
pub fn separable_features(per_class: usize, dim: usize, seed: u64) -> Result<TrainingSet, InferError> {
    if dim < NUM_LABELS {
        return Err(InferError::FeatureDimension {
            expected: NUM_LABELS,
            found: dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(per_class * NUM_LABELS);
    let mut labels = Vec::with_capacity(per_class * NUM_LABELS);
    for class in 0..NUM_LABELS {
        for _ in 0..per_class {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            v[class] = rng.gen_range(2.0..=4.0);
            rows.push(v);
            labels.push(class);
        }
    }
    TrainingSet::from_rows(&rows, labels)
}
