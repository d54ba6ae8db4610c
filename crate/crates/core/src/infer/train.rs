//! Softmax/cross-entropy head trained with Adam on fixed feature vectors.
//!
//! This is the only optimizer in the crate: fine-tuning the last layer of
//! a CNN container and training the HOG / color-LBP linear baselines both
//! run through [`fit`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::ModelContainer;
use super::{InferError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 100,
            adam: AdamConfig::default(),
            seed: 0x5eed,
        }
    }
}

/// Feature vectors with class indices, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(dim: usize, features: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(InferError::EmptyTrainingSet);
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(InferError::FeatureDimension {
                expected: dim * labels.len(),
                found: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(InferError::NonFinite("training features"));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], labels: Vec<usize>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(InferError::FeatureDimension {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, rows.concat(), labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Linear layer `logits = x·W + b` held in f64 while training.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxHead {
    pub inputs: usize,
    pub classes: usize,
    /// `[in][out]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxHead {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        Self {
            inputs,
            classes,
            weights: vec![0.0; inputs * classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn from_f32(inputs: usize, classes: usize, weights: &[f32], bias: &[f32]) -> Self {
        Self {
            inputs,
            classes,
            weights: weights.iter().map(|&v| v as f64).collect(),
            bias: bias.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_f32(&self) -> (Vec<f32>, Vec<f32>) {
        (
            self.weights.iter().map(|&v| v as f32).collect(),
            self.bias.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (i, &v) in x.iter().enumerate() {
            let row = &self.weights[i * self.classes..(i + 1) * self.classes];
            for (a, &w) in z.iter_mut().zip(row) {
                *a += v as f64 * w;
            }
        }
        z
    }

    pub fn probabilities(&self, x: &[f32]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn predict(&self, x: &[f32]) -> usize {
        let p = self.probabilities(x);
        let mut best = 0;
        for (j, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = j;
            }
        }
        best
    }

    fn check(&self, set: &TrainingSet) -> Result<()> {
        if set.dim != self.inputs {
            return Err(InferError::FeatureDimension {
                expected: self.inputs,
                found: set.dim,
            });
        }
        if let Some(&bad) = set.labels.iter().find(|&&l| l >= self.classes) {
            return Err(InferError::LabelOutOfRange {
                label: bad,
                classes: self.classes,
            });
        }
        Ok(())
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Mean cross-entropy over the whole set.
pub fn cross_entropy(head: &SoftmaxHead, set: &TrainingSet) -> Result<f64> {
    head.check(set)?;
    let total: f64 = (0..set.len())
        .map(|i| {
            let z = head.logits(set.sample(i));
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[set.labels[i]]
        })
        .sum();
    Ok(total / set.len() as f64)
}

pub fn accuracy(head: &SoftmaxHead, set: &TrainingSet) -> Result<f64> {
    head.check(set)?;
    let correct = (0..set.len())
        .filter(|&i| head.predict(set.sample(i)) == set.labels[i])
        .count();
    Ok(correct as f64 / set.len() as f64)
}

/// Gradient of the mean cross-entropy over `batch` with respect to the head.
pub fn head_gradient(head: &SoftmaxHead, batch: &TrainingSet) -> Result<HeadGradient> {
    head.check(batch)?;
    let all: Vec<usize> = (0..batch.len()).collect();
    Ok(gradient_on(head, batch, &all))
}

fn gradient_on(head: &SoftmaxHead, set: &TrainingSet, rows: &[usize]) -> HeadGradient {
    let k = head.classes;
    let mut g = HeadGradient {
        weights: vec![0.0; head.weights.len()],
        bias: vec![0.0; k],
    };
    for &r in rows {
        let x = set.sample(r);
        let mut delta = head.probabilities(x);
        delta[set.labels[r]] -= 1.0;
        for (gb, d) in g.bias.iter_mut().zip(&delta) {
            *gb += d;
        }
        for (i, &v) in x.iter().enumerate() {
            let v = v as f64;
            for (gw, d) in g.weights[i * k..(i + 1) * k].iter_mut().zip(&delta) {
                *gw += v * d;
            }
        }
    }
    let n = rows.len() as f64;
    g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v /= n);
    g
}

struct Adam {
    config: AdamConfig,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    fn new(config: AdamConfig, params: usize) -> Self {
        Self {
            config,
            step: 0,
            first: vec![0.0; params],
            second: vec![0.0; params],
        }
    }

    fn update<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'a f64>,
    ) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((p, &g), m), v) in params
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Full-set loss before training followed by the loss after each epoch.
    pub losses: Vec<f64>,
    pub accuracy: f64,
}

/// Minibatch Adam on the mean cross-entropy. Each epoch visits the samples
/// in a fresh seeded permutation; the last batch may be short.
pub fn fit(head: &SoftmaxHead, set: &TrainingSet, config: &TrainConfig) -> Result<(SoftmaxHead, TrainReport)> {
    head.check(set)?;
    if config.batch_size == 0 {
        return Err(InferError::Training("batch size must be positive".into()));
    }
    let mut head = head.clone();
    let mut adam = Adam::new(config.adam, head.weights.len() + head.bias.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    losses.push(cross_entropy(&head, set)?);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let g = gradient_on(&head, set, batch);
            adam.update(
                head.weights.iter_mut().chain(head.bias.iter_mut()),
                g.weights.iter().chain(g.bias.iter()),
            );
        }
        losses.push(cross_entropy(&head, set)?);
    }
    let accuracy = accuracy(&head, set)?;
    Ok((head, TrainReport { losses, accuracy }))
}

/// Per-feature mean and spread of a training set.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(set: &TrainingSet) -> Self {
        let n = set.len() as f64;
        let mut mean = vec![0.0; set.dim];
        for i in 0..set.len() {
            for (m, &v) in mean.iter_mut().zip(set.sample(i)) {
                *m += v as f64 / n;
            }
        }
        let mut var = vec![0.0; set.dim];
        for i in 0..set.len() {
            for ((s, &v), m) in var.iter_mut().zip(set.sample(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2) / n;
            }
        }
        // constant features keep unit scale
        let scale = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, set: &TrainingSet) -> TrainingSet {
        let features = set
            .features
            .chunks(set.dim)
            .flat_map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(&v, (m, s))| ((v as f64 - m) / s) as f32)
            })
            .collect();
        TrainingSet {
            dim: set.dim,
            features,
            labels: set.labels.clone(),
        }
    }

    /// The same classifier expressed over standardized inputs.
    fn to_standard(&self, head: &SoftmaxHead) -> SoftmaxHead {
        let k = head.classes;
        let mut out = head.clone();
        for i in 0..head.inputs {
            for c in 0..k {
                let w = head.weights[i * k + c];
                out.weights[i * k + c] = w * self.scale[i];
                out.bias[c] += w * self.mean[i];
            }
        }
        out
    }

    /// Fold the standardization back into a head over raw inputs.
    fn to_raw(&self, head: &SoftmaxHead) -> SoftmaxHead {
        let k = head.classes;
        let mut out = head.clone();
        for i in 0..head.inputs {
            for c in 0..k {
                let w = head.weights[i * k + c] / self.scale[i];
                out.weights[i * k + c] = w;
                out.bias[c] -= w * self.mean[i];
            }
        }
        out
    }
}

/// Retrain only the container's final dense layer on precomputed features.
///
/// Optimization runs on per-feature standardized inputs; the affine map is
/// folded into the trained weights so the container still takes raw
/// features. Zero epochs returns an identical container.
pub fn finetune_head(
    model: &ModelContainer,
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<(ModelContainer, TrainReport)> {
    let (w, b) = model.head();
    let head = SoftmaxHead::from_f32(model.feature_dim(), b.len(), w, b);
    head.check(set)?;
    let standardizer = Standardizer::fit(set);
    let (trained, mut report) = fit(&standardizer.to_standard(&head), &standardizer.apply(set), config)?;
    if config.epochs == 0 {
        report.accuracy = accuracy(&head, set)?;
        return Ok((model.clone(), report));
    }
    let (w, b) = standardizer.to_raw(&trained).to_f32();
    let tuned = model.with_head(&w, &b)?;
    // accuracy of the weights actually stored
    let (w, b) = tuned.head();
    report.accuracy = accuracy(&SoftmaxHead::from_f32(head.inputs, head.classes, w, b), set)?;
    Ok((tuned, report))
}
