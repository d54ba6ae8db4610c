//! Whole-slide assessment: tile, classify in parallel, score, render.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::assessment::{self, AssessError, AssessmentReport, Thresholds, Timings};
use crate::density::{self, DensityError, DensityGrid, DensityParams, DEFAULT_OPACITY};
use crate::infer::{classify_patch, InferError, ModelContainer, TilePrediction};
use crate::slide_io::{self, SlideImage, SlideIoError, TileGrid};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    SlideIo(#[from] SlideIoError),
    #[error(transparent)]
    Model(#[from] InferError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Assessment(#[from] AssessError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Run `f` over `items` on a pool of `threads` workers. Output order
/// follows input order whatever the thread count.
pub fn par_map<T, U, E, F>(threads: usize, items: &[T], f: F) -> Result<Vec<U>, PipelineError>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync,
    PipelineError: From<E>,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let out: Result<Vec<U>, E> = pool.install(|| items.par_iter().map(&f).collect());
    Ok(out?)
}

/// Classify every tile of the grid, returned in row-major tile order.
pub fn classify_tiles(
    model: &ModelContainer,
    slide: &SlideImage,
    grid: &TileGrid,
    threads: usize,
) -> Result<Vec<TilePrediction>, PipelineError> {
    let indices: Vec<(usize, usize)> = grid.indices().collect();
    par_map(threads, &indices, |&(row, col)| -> Result<_, PipelineError> {
        let patch = slide_io::extract_patch(slide, grid, row, col)?;
        Ok(classify_patch(model, &patch)?)
    })
}

#[derive(Clone, Debug)]
pub struct AssessConfig {
    /// Defaults to the model's input size.
    pub tile_size: Option<u32>,
    /// Defaults to the tile size.
    pub stride: Option<u32>,
    pub threads: usize,
    pub thresholds: Thresholds,
    pub density: DensityParams,
    /// Heat-map opacity over the slide; `None` renders the bare color field.
    pub overlay_opacity: Option<f64>,
    /// Record wall-clock timings; off gives timing-free, reproducible reports.
    pub timings: bool,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            tile_size: None,
            stride: None,
            threads: 1,
            thresholds: Thresholds::default(),
            density: DensityParams::default(),
            overlay_opacity: Some(DEFAULT_OPACITY),
            timings: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssessOutput {
    pub report: AssessmentReport,
    pub grid: TileGrid,
    pub predictions: Vec<TilePrediction>,
    pub density: DensityGrid,
    pub heatmap: SlideImage,
}

/// Assess a decoded slide. `decode_ms` is carried into the report's timings.
pub fn assess_slide(
    slide_id: &str,
    slide: &SlideImage,
    decode_ms: f64,
    model: &ModelContainer,
    config: &AssessConfig,
) -> Result<AssessOutput, PipelineError> {
    let tile = config.tile_size.unwrap_or(model.input_size());
    let stride = config.stride.unwrap_or(tile);
    let grid = slide_io::make_grid(slide, tile, stride)?;
    config.thresholds.validate()?;

    let t0 = Instant::now();
    let predictions = classify_tiles(model, slide, &grid, config.threads)?;
    let t1 = Instant::now();
    let density = density::build_density_grid(&predictions, &grid, &config.density)?;
    let hist = assessment::histogram(&predictions)?;
    let outcome = assessment::verdicts(&hist, &config.thresholds);
    let t2 = Instant::now();
    let heatmap = match config.overlay_opacity {
        Some(opacity) => density::render_heatmap(&density, tile, stride, Some(slide), opacity)?,
        None => {
            // crop the bare color field to the slide's extent
            let full = density::render_heatmap(&density, tile, stride, None, 1.0)?;
            crop(&full, slide.width(), slide.height())
        }
    };
    let t3 = Instant::now();

    let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
    let timings = if config.timings {
        Timings {
            decode: decode_ms.max(0.0),
            classify: ms(t0, t1),
            density: ms(t1, t2),
            render: ms(t2, t3),
        }
    } else {
        Timings::default()
    };
    let report = AssessmentReport {
        slide: slide_id.to_string(),
        model: model.name().to_string(),
        tile_size: tile,
        stride,
        grid: (grid.rows, grid.cols),
        histogram: hist,
        mean_density: density.mean(),
        verdicts: outcome.verdicts,
        all_empty: outcome.all_empty,
        timings,
    };
    report.validate()?;
    Ok(AssessOutput {
        report,
        grid,
        predictions,
        density,
        heatmap,
    })
}

fn crop(image: &SlideImage, width: u32, height: u32) -> SlideImage {
    let src_row = image.width() as usize * 3;
    let data = image
        .data()
        .chunks(src_row)
        .take(height as usize)
        .flat_map(|row| &row[..width as usize * 3])
        .copied()
        .collect();
    SlideImage::new(width, height, data).expect("crop stays inside the image")
}
