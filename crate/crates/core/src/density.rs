//! Per-tile information density and the blue-to-yellow heat map.
//!
//! A label's score is `S(l) = λ₃ − x(l)²`; a tile's density is
//! `I = λ₁·S(l₁) + λ₂·S(l₂)` over its two most probable labels.

use std::fmt::Write as _;

use thiserror::Error;

use crate::infer::TilePrediction;
use crate::label::{Label, NUM_LABELS};
use crate::slide_io::{SlideImage, TileGrid};

pub const DEFAULT_OPACITY: f64 = 0.6;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("lambda1 + lambda2 = {0}, must equal 1")]
    Weights(f64),
    #[error("score for {label} is {score}, outside [0, 255]")]
    ScoreRange { label: Label, score: f64 },
    #[error("no prediction for tile ({row}, {col})")]
    MissingTile { row: usize, col: usize },
    #[error("prediction for tile ({row}, {col}) lies outside the grid")]
    StrayTile { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("opacity {0} outside [0, 1]")]
    Opacity(f64),
}

pub type Result<T, E = DensityError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Position of each label on the parabola, indexed by [`Label::index`].
    pub label_x: [f64; NUM_LABELS],
}

impl Default for DensityParams {
    fn default() -> Self {
        let mut label_x = [0.0; NUM_LABELS];
        for label in Label::ALL {
            label_x[label.index()] = match label {
                Label::Dense => 1.0,
                Label::EpiOnly | Label::LeukOnly => 8.0,
                Label::Edge | Label::Damaged => 13.0,
                Label::Crystalized | Label::Dirt => 15.0,
                Label::Empty => 16.0,
            };
        }
        Self {
            lambda1: 0.8,
            lambda2: 0.2,
            lambda3: 256.0,
            label_x,
        }
    }
}

impl DensityParams {
    pub fn validate(&self) -> Result<()> {
        let sum = self.lambda1 + self.lambda2;
        if (sum - 1.0).abs() > 1e-12 || self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(DensityError::Weights(sum));
        }
        for label in Label::ALL {
            let score = self.raw_score(label);
            if !(0.0..=255.0).contains(&score) {
                return Err(DensityError::ScoreRange { label, score });
            }
        }
        Ok(())
    }

    fn raw_score(&self, label: Label) -> f64 {
        let x = self.label_x[label.index()];
        -x * x + self.lambda3
    }
}

/// `S(l) = −x² + λ₃`.
pub fn label_score(label: Label, params: &DensityParams) -> Result<f64> {
    let score = params.raw_score(label);
    if !(0.0..=255.0).contains(&score) {
        return Err(DensityError::ScoreRange { label, score });
    }
    Ok(score)
}

/// `I(r) = λ₁·S(l₁) + λ₂·S(l₂)`.
pub fn region_density(prediction: &TilePrediction, params: &DensityParams) -> Result<f64> {
    let value = params.lambda1 * label_score(prediction.l1, params)?
        + params.lambda2 * label_score(prediction.l2, params)?;
    Ok(value.clamp(0.0, 255.0))
}

/// Density values on the tile grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(DensityError::Dimensions(format!(
                "{rows}x{cols} grid cannot hold {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(DensityError::Dimensions(format!("density {v} outside [0, 255]")));
        }
        Ok(Self { rows, cols, values })
    }

    /// Grid with every tile at the same density.
    pub fn uniform(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Row-major CSV with one decimal place.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.1}")).collect();
            writeln!(out, "{}", line.join(",")).unwrap();
        }
        out
    }
}

/// Evaluate [`region_density`] for every tile. Predictions may arrive in
/// any order; each is placed by its tile index.
pub fn build_density_grid(
    predictions: &[TilePrediction],
    grid: &TileGrid,
    params: &DensityParams,
) -> Result<DensityGrid> {
    params.validate()?;
    let mut values = vec![None; grid.len()];
    for p in predictions {
        let (row, col) = p.tile_index;
        if row >= grid.rows || col >= grid.cols {
            return Err(DensityError::StrayTile { row, col });
        }
        values[row * grid.cols + col] = Some(region_density(p, params)?);
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or(DensityError::MissingTile {
                row: i / grid.cols,
                col: i % grid.cols,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DensityGrid::new(grid.rows, grid.cols, values)
}

/// Unrounded heat color `(I, I, 255 − I)`: blue at 0, yellow at 255.
#[inline]
pub fn heat_color(density: f64) -> [f64; 3] {
    [density, density, 255.0 - density]
}

/// Paint one flat rectangle per tile. Pixels covered by several tiles take
/// the mean of their colors. With a slide, the result is
/// `opacity·color + (1 − opacity)·slide` over the slide's extent; without,
/// the canvas spans the whole tile grid.
pub fn render_heatmap(
    density: &DensityGrid,
    tile_size: u32,
    stride: u32,
    slide: Option<&SlideImage>,
    opacity: f64,
) -> Result<SlideImage> {
    if !(0.0..=1.0).contains(&opacity) {
        return Err(DensityError::Opacity(opacity));
    }
    if tile_size == 0 || stride == 0 || stride > tile_size {
        return Err(DensityError::Dimensions(format!(
            "tile {tile_size} with stride {stride}"
        )));
    }
    let grid_w = (density.cols as u32 - 1) * stride + tile_size;
    let grid_h = (density.rows as u32 - 1) * stride + tile_size;
    let (width, height) = match slide {
        Some(s) => {
            let expect = |extent: u32| extent.saturating_sub(tile_size).div_ceil(stride) as usize + 1;
            if expect(s.width()) != density.cols || expect(s.height()) != density.rows {
                return Err(DensityError::Dimensions(format!(
                    "{}x{} density grid does not tile a {}x{} slide",
                    density.rows,
                    density.cols,
                    s.width(),
                    s.height()
                )));
            }
            (s.width(), s.height())
        }
        None => (grid_w, grid_h),
    };
    let (w, h) = (width as usize, height as usize);

    let mut sums = vec![[0.0f64; 3]; w * h];
    let mut counts = vec![0u32; w * h];
    for row in 0..density.rows {
        for col in 0..density.cols {
            let color = heat_color(density.get(row, col));
            let (x0, y0) = (col * stride as usize, row * stride as usize);
            for y in y0..(y0 + tile_size as usize).min(h) {
                for x in x0..(x0 + tile_size as usize).min(w) {
                    let i = y * w + x;
                    for c in 0..3 {
                        sums[i][c] += color[c];
                    }
                    counts[i] += 1;
                }
            }
        }
    }

    let mut data = Vec::with_capacity(w * h * 3);
    for (i, (sum, &n)) in sums.iter().zip(&counts).enumerate() {
        for (c, &channel) in sum.iter().enumerate() {
            let color = if n == 0 { 0.0 } else { channel / n as f64 };
            let value = match slide {
                Some(s) => opacity * color + (1.0 - opacity) * s.data()[i * 3 + c] as f64,
                None => color,
            };
            data.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(SlideImage::new(width, height, data).expect("canvas dimensions are consistent"))
}
