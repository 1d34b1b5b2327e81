//! Long-tailed Gaussian-mixture benchmark.
//!
//! Class `j` is centred on `separation · e_j`, so the means sit on the
//! vertices of a scaled simplex; extra dimensions carry pure noise. Class
//! sizes decay geometrically from the head class to the tail class, whose
//! ratio is `imbalance_ratio`. Class 0 plays the normal-traffic role.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub samples: usize,
    pub imbalance_ratio: f64,
    pub dim: usize,
    pub separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            samples: 10_000,
            imbalance_ratio: 50.0,
            dim: 16,
            separation: 3.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synthetic: {m}")));
        if self.num_classes < 2 {
            return fail("need at least 2 classes".into());
        }
        if self.dim < self.num_classes {
            return fail(format!("dim {} smaller than class count {}", self.dim, self.num_classes));
        }
        if !(self.imbalance_ratio >= 1.0) {
            return fail(format!("imbalance_ratio {} below 1", self.imbalance_ratio));
        }
        if !(self.noise_std > 0.0) || !self.separation.is_finite() {
            return fail("noise_std must be positive and separation finite".into());
        }
        let counts = class_sizes(self.samples, self.num_classes, self.imbalance_ratio);
        if counts.iter().any(|&c| c < 2) {
            return fail(format!("{} samples leave a class with fewer than 2 rows: {counts:?}", self.samples));
        }
        Ok(())
    }
}

/// Geometric class sizes summing to `total`, largest remainder rounding.
pub fn class_sizes(total: usize, classes: usize, ratio: f64) -> Vec<usize> {
    if classes == 0 {
        return Vec::new();
    }
    let step = if classes > 1 { ratio.powf(-1.0 / (classes - 1) as f64) } else { 1.0 };
    let raw: Vec<f64> = (0..classes).map(|j| step.powi(j as i32)).collect();
    let norm: f64 = raw.iter().sum();
    let exact: Vec<f64> = raw.iter().map(|r| r / norm * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - sizes.iter().sum::<usize>();
    for &j in order.iter().take(short) {
        sizes[j] += 1;
    }
    sizes
}

pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|j| if j == 0 { "normal".to_string() } else { format!("attack{j}") }).collect()
}

/// Draw the benchmark. Rows are grouped by class.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let sizes = class_sizes(config.samples, config.num_classes, config.imbalance_ratio);
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut features = Array2::<f64>::zeros((config.samples, config.dim));
    let mut labels = Vec::with_capacity(config.samples);
    let mut row = 0;
    for (class, &n) in sizes.iter().enumerate() {
        let mut r = rng::stream(config.seed, &[rng::TAG_SYNTH, class as u64]);
        for _ in 0..n {
            let mut x = features.row_mut(row);
            for v in x.iter_mut() {
                *v = noise.sample(&mut r);
            }
            x[class] += config.separation;
            labels.push(class);
            row += 1;
        }
    }
    Dataset::labeled(features, labels, class_names(config.num_classes))
}
