//! Patches-per-second harness for the tile classifiers.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::infer::TilePrediction;
use crate::slide_io::{self, Patch};

pub const MIN_COUNT: usize = 100;
pub const MIN_WARMUP: usize = 10;
pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark setup: {0}")]
    Setup(String),
    #[error("engine failed after {completed} of {requested} patches: {message}")]
    EngineFailed {
        completed: usize,
        requested: usize,
        message: String,
    },
}

/// Patches fed to the engine. Encoded sources are decoded inside the timed
/// region.
pub enum PatchSource {
    Decoded(Vec<Patch>),
    Encoded(Vec<Vec<u8>>),
}

impl PatchSource {
    fn len(&self) -> usize {
        match self {
            PatchSource::Decoded(p) => p.len(),
            PatchSource::Encoded(b) => b.len(),
        }
    }

    fn includes_decode(&self) -> bool {
        matches!(self, PatchSource::Encoded(_))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub engine: String,
    pub patch_count: usize,
    pub warmup: usize,
    /// Median over repetitions.
    pub wall_time_ms: f64,
    pub patches_per_second: f64,
    pub repetitions_ms: Vec<f64>,
    pub includes_decode: bool,
    pub threads: usize,
}

impl BenchResult {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("bench results serialize")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchConfig {
    pub count: usize,
    pub warmup: usize,
    pub threads: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            count: MIN_COUNT,
            warmup: MIN_WARMUP,
            threads: 1,
            repetitions: MIN_REPETITIONS,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Time `config.count` classifications, `config.repetitions` times, after
/// an untimed warmup. Returns the result and the predictions of the last
/// repetition in stream order.
pub fn run_bench<F, E>(
    engine_id: &str,
    engine: F,
    source: &PatchSource,
    config: &BenchConfig,
) -> Result<(BenchResult, Vec<TilePrediction>), BenchError>
where
    F: Fn(&Patch) -> Result<TilePrediction, E> + Sync,
    E: std::fmt::Display,
{
    if config.count < MIN_COUNT || config.warmup < MIN_WARMUP {
        return Err(BenchError::Setup(format!(
            "need count >= {MIN_COUNT} and warmup >= {MIN_WARMUP}, got {} and {}",
            config.count, config.warmup
        )));
    }
    if config.repetitions < MIN_REPETITIONS {
        return Err(BenchError::Setup(format!(
            "need at least {MIN_REPETITIONS} repetitions"
        )));
    }
    if source.len() == 0 {
        return Err(BenchError::Setup("empty patch source".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.max(1))
        .build()
        .map_err(|e| BenchError::Setup(e.to_string()))?;

    let one = |i: usize| -> Result<TilePrediction, String> {
        let patch = match source {
            PatchSource::Decoded(p) => p[i % p.len()].clone(),
            PatchSource::Encoded(b) => slide_io::decode_image(&b[i % b.len()])
                .and_then(|img| Patch::from_image(&img))
                .map_err(|e| e.to_string())?,
        };
        engine(&patch).map_err(|e| e.to_string())
    };
    let stream = |n: usize| -> Result<Vec<TilePrediction>, BenchError> {
        let results: Vec<_> = pool.install(|| (0..n).into_par_iter().map(one).collect());
        let completed = results.iter().take_while(|r| r.is_ok()).count();
        results.into_iter().collect::<Result<Vec<_>, _>>().map_err(|message| {
            BenchError::EngineFailed {
                completed,
                requested: n,
                message,
            }
        })
    };

    stream(config.warmup)?;
    let mut repetitions_ms = Vec::with_capacity(config.repetitions);
    let mut predictions = Vec::new();
    for _ in 0..config.repetitions {
        let start = Instant::now();
        predictions = stream(config.count)?;
        repetitions_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let wall_time_ms = median(&repetitions_ms).max(f64::MIN_POSITIVE);
    Ok((
        BenchResult {
            engine: engine_id.to_string(),
            patch_count: config.count,
            warmup: config.warmup,
            wall_time_ms,
            patches_per_second: config.count as f64 / (wall_time_ms / 1000.0),
            repetitions_ms,
            includes_decode: source.includes_decode(),
            threads: config.threads.max(1),
        },
        predictions,
    ))
}
