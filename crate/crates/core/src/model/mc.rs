use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::rng;

use super::config::ModelConfig;
use super::network::{forward, Mode};
use super::params::ModelParams;

/// Mean class probabilities and their per-class standard deviation over
/// `passes` stochastic forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub mean_probs: Vec<f64>,
    pub std: Vec<f64>,
    pub passes: usize,
}

impl McPrediction {
    /// Argmax of `mean_probs`, ties to the lowest index.
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.mean_probs.iter().enumerate() {
            if p > self.mean_probs[best] {
                best = j;
            }
        }
        best
    }
}

/// Running mean and population variance (Welford). Identical inputs leave
/// the mean bit-identical to the input and the variance exactly zero.
#[derive(Debug, Clone)]
pub struct McAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl McAccumulator {
    pub fn new(classes: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; classes],
            m2: vec![0.0; classes],
        }
    }

    pub fn push(&mut self, probs: &[f64]) {
        self.count += 1;
        let t = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(probs) {
            let delta = x - *m;
            *m += delta / t;
            *s += delta * (x - *m);
        }
    }

    pub fn finish(self) -> McPrediction {
        let t = self.count.max(1) as f64;
        McPrediction {
            std: self.m2.iter().map(|s| (s.max(0.0) / t).sqrt()).collect(),
            mean_probs: self.mean,
            passes: self.count,
        }
    }
}

const CHUNK: usize = 512;

/// `passes` dropout-active forward passes over `batch`. Masks for chunk `c`
/// and pass `t` come from a stream keyed on `(seed, c, t)`.
pub fn mc_predict(
    params: &ModelParams,
    config: &ModelConfig,
    batch: ArrayView2<f64>,
    passes: usize,
    seed: u64,
) -> Result<Vec<McPrediction>> {
    if passes < 1 {
        return Err(Error::InvalidArgument("MC prediction needs at least one pass".into()));
    }
    let n = batch.nrows();
    let mut out = Vec::with_capacity(n);
    for (c, start) in (0..n).step_by(CHUNK).enumerate() {
        let end = (start + CHUNK).min(n);
        let chunk = batch.slice(ndarray::s![start..end, ..]);
        let mut acc: Vec<McAccumulator> = (start..end).map(|_| McAccumulator::new(config.num_classes)).collect();
        for t in 0..passes {
            let mode = Mode::Stochastic {
                seed: rng::derive(seed, &[rng::TAG_MC, c as u64, t as u64]),
            };
            let probs = forward(params, config, chunk, mode)?.probabilities;
            for (a, row) in acc.iter_mut().zip(probs.rows()) {
                a.push(row.as_slice().expect("standard layout"));
            }
        }
        out.extend(acc.into_iter().map(McAccumulator::finish));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_probe_has_half_mean_and_half_std() {
        let mut acc = McAccumulator::new(1);
        for x in [1.0, 0.0, 1.0, 0.0] {
            acc.push(&[x]);
        }
        let p = acc.finish();
        assert_eq!(p.mean_probs, vec![0.5]);
        assert!((p.std[0] - 0.5).abs() < 1e-15);
        assert_eq!(p.passes, 4);
    }

    #[test]
    fn single_pass_has_zero_std() {
        let mut acc = McAccumulator::new(3);
        acc.push(&[0.2, 0.3, 0.5]);
        let p = acc.finish();
        assert_eq!(p.mean_probs, vec![0.2, 0.3, 0.5]);
        assert_eq!(p.std, vec![0.0; 3]);
    }

    #[test]
    fn identical_passes_are_exact() {
        let x = [0.1, 0.7, 0.2];
        let mut acc = McAccumulator::new(3);
        for _ in 0..10 {
            acc.push(&x);
        }
        let p = acc.finish();
        assert_eq!(p.mean_probs, x.to_vec());
        assert_eq!(p.std, vec![0.0; 3]);
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = McPrediction {
            mean_probs: vec![0.4, 0.4, 0.2],
            std: vec![0.0; 3],
            passes: 1,
        };
        assert_eq!(p.predicted_class(), 0);
    }
}
