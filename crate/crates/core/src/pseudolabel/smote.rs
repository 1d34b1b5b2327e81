//! Borderline-SMOTE1 in the encoded feature space.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::FilterConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub features: Vec<f64>,
    pub class: usize,
    /// Row indices of the two parents in the input matrix.
    pub parents: (usize, usize),
    pub gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoteOutcome {
    pub samples: Vec<SyntheticSample>,
    /// Classes that were asked for samples but could not produce any.
    pub warnings: Vec<String>,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` rows closest to `query` among `candidates`, nearest
/// first, ties broken by index.
fn nearest(samples: ArrayView2<f64>, query: usize, candidates: impl Iterator<Item = usize>, k: usize) -> Vec<usize> {
    let q = samples.row(query);
    let mut scored: Vec<(f64, usize)> = candidates
        .filter(|&j| j != query)
        .map(|j| (sq_dist(q, samples.row(j)), j))
        .collect();
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Indices of DANGER samples of `class`: among the `m` nearest neighbours
/// over all classes, the other-class count `m'` satisfies `m/2 ≤ m' < m`.
pub(crate) fn danger_set(samples: ArrayView2<f64>, classes: &[usize], class: usize, m: usize) -> Vec<usize> {
    let n = samples.nrows();
    (0..n)
        .filter(|&i| classes[i] == class)
        .filter(|&i| {
            let nn = nearest(samples, i, 0..n, m);
            let m_eff = nn.len();
            let other = nn.iter().filter(|&&j| classes[j] != class).count();
            m_eff > 0 && 2 * other >= m_eff && other < m_eff
        })
        .collect()
}

/// Generate `deficits[c]` synthetic samples for every class `c`.
///
/// Samples are produced round-robin over the class's DANGER rows, each
/// interpolated toward one of its `smote_k` nearest same-class rows with a
/// uniform gap. A class with fewer than two rows or no DANGER rows yields a
/// warning instead.
pub fn borderline_smote(
    samples: ArrayView2<f64>,
    classes: &[usize],
    deficits: &[usize],
    config: &FilterConfig,
    seed: u64,
) -> Result<SmoteOutcome> {
    let n = samples.nrows();
    if classes.len() != n {
        return Err(Error::Shape(format!("{n} samples, {} classes", classes.len())));
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= deficits.len()) {
        return Err(Error::InvalidArgument(format!("class {c} has no deficit entry")));
    }
    let mut out = SmoteOutcome::default();
    for (class, &need) in deficits.iter().enumerate() {
        if need == 0 {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&i| classes[i] == class).collect();
        if members.len() < 2 {
            out.warnings.push(format!("class {class}: {} sample(s), oversampling skipped", members.len()));
            continue;
        }
        let danger = danger_set(samples, classes, class, config.smote_m);
        if danger.is_empty() {
            out.warnings.push(format!("class {class}: no borderline samples, oversampling skipped"));
            continue;
        }
        let neighbours: Vec<Vec<usize>> = danger
            .iter()
            .map(|&i| nearest(samples, i, members.iter().copied(), config.smote_k))
            .collect();
        let mut r = rng::stream(seed, &[rng::TAG_SMOTE, class as u64]);
        for t in 0..need {
            let slot = t % danger.len();
            let a = danger[slot];
            let b = neighbours[slot][r.random_range(0..neighbours[slot].len())];
            let gap: f64 = r.random();
            let (pa, pb) = (samples.row(a), samples.row(b));
            let features = pa.iter().zip(pb.iter()).map(|(x, y)| x + gap * (y - x)).collect();
            out.samples.push(SyntheticSample { features, class, parents: (a, b), gap });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn safe_minority_generates_nothing() {
        // Minority cluster far from the majority: every neighbour is same-class.
        let mut rows = Vec::new();
        let mut classes = Vec::new();
        for i in 0..12 {
            rows.extend([100.0 + i as f64 * 0.01, 0.0]);
            classes.push(1);
        }
        for i in 0..30 {
            rows.extend([i as f64 * 0.01, 0.0]);
            classes.push(0);
        }
        let x = Array2::from_shape_vec((42, 2), rows).unwrap();
        let out = borderline_smote(x.view(), &classes, &[0, 5], &FilterConfig::default(), 1).unwrap();
        assert!(out.samples.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn danger_and_noise_classification() {
        // Sample 0 sits among three majority points with one minority partner.
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [-0.1, 0.0], [0.0, -0.2], [9.0, 9.0], [9.1, 9.0]];
        let classes = [1, 1, 0, 0, 0, 1, 0];
        let danger = danger_set(x.view(), &classes, 1, 4);
        assert!(danger.contains(&0));
        // Sample 5 has only its majority neighbour at distance 0.1, then the rest.
        let noise = danger_set(x.view(), &classes, 1, 1);
        assert!(!noise.contains(&5));
    }

    #[test]
    fn synthetic_points_lie_on_parent_segment() {
        let x = array![[0.0, 0.0], [0.3, 0.0], [0.6, 0.0], [0.0, 0.2], [0.3, 0.2], [0.6, 0.2]];
        let classes = [1, 1, 1, 0, 0, 0];
        let cfg = FilterConfig { smote_k: 2, smote_m: 4, ..FilterConfig::default() };
        let out = borderline_smote(x.view(), &classes, &[0, 20], &cfg, 7).unwrap();
        assert_eq!(out.samples.len(), 20);
        for s in &out.samples {
            assert!((0.0..=1.0).contains(&s.gap));
            let (a, b) = (x.row(s.parents.0), x.row(s.parents.1));
            for j in 0..2 {
                assert!((s.features[j] - (a[j] + s.gap * (b[j] - a[j]))).abs() < 1e-12);
            }
        }
        let again = borderline_smote(x.view(), &classes, &[0, 20], &cfg, 7).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn singleton_class_is_skipped_with_warning() {
        let x = array![[0.0], [1.0], [2.0]];
        let out = borderline_smote(x.view(), &[0, 0, 1], &[0, 3], &FilterConfig::default(), 0).unwrap();
        assert!(out.samples.is_empty());
        assert!(out.warnings[0].contains("class 1"));
    }
}
