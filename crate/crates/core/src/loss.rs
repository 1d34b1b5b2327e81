//! Hybrid training objective.
//!
//! `L_HY = (1 − β)·L_WCE + β·L_SCL`, where `L_SCL` is a supervised
//! contrastive loss over ℓ2-normalised embeddings and `L_WCE` a cross-entropy
//! weighted per class by `log(N_min + n)/log(N_i + n)` and per sample by a
//! reset weight for normal/attack confusions. Every term returns its exact
//! gradient with respect to the embeddings or the logits.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::argmax_rows;

/// Lower clamp applied before every logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// How reset weights are assigned to misclassified samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// `α` only when the error crosses the normal/attack boundary, 1 otherwise.
    BoundaryCrossing,
    /// `α` for every misclassification and 0 for correct predictions.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub temperature: f64,
    pub reset_alpha: f64,
    pub smoothing_n: f64,
    pub beta_start: f64,
    pub beta_min: f64,
    pub normal_classes: Vec<usize>,
    /// `None` means every class not listed as normal.
    pub attack_classes: Option<Vec<usize>>,
    pub reset_mode: ResetMode,
    /// Ablation switch: `false` pins β to 0.
    pub use_scl: bool,
    /// Ablation switch: `false` sets every class and reset weight to 1.
    pub use_class_weights: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            reset_alpha: 0.95,
            smoothing_n: 1.0,
            beta_start: 0.9,
            beta_min: 0.05,
            normal_classes: vec![0],
            attack_classes: None,
            reset_mode: ResetMode::BoundaryCrossing,
            use_scl: true,
            use_class_weights: true,
        }
    }
}

impl LossConfig {
    /// Plain cross-entropy: no contrastive term, unit weights.
    pub fn plain_cross_entropy() -> Self {
        Self {
            use_scl: false,
            use_class_weights: false,
            ..Self::default()
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("loss: {m}")));
        if !(self.temperature > 0.0) {
            return fail(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.reset_alpha > 0.0 && self.reset_alpha <= 1.0) {
            return fail(format!("reset_alpha {} outside (0, 1]", self.reset_alpha));
        }
        if !(self.smoothing_n > 0.0) {
            return fail(format!("smoothing_n {} must be positive", self.smoothing_n));
        }
        for (name, b) in [("beta_start", self.beta_start), ("beta_min", self.beta_min)] {
            if !(0.0..=1.0).contains(&b) {
                return fail(format!("{name} {b} outside [0, 1]"));
            }
        }
        let mut seen = vec![0u8; num_classes];
        for &c in self.normal_classes.iter().chain(self.attack_classes.iter().flatten()) {
            if c >= num_classes {
                return fail(format!("class {c} out of range for {num_classes} classes"));
            }
            seen[c] += 1;
        }
        if let Some(attack) = &self.attack_classes {
            if attack.len() + self.normal_classes.len() != num_classes || seen.iter().any(|&s| s != 1) {
                return fail("normal and attack classes must partition the class set".into());
            }
        } else if seen.iter().any(|&s| s > 1) {
            return fail("normal classes contain duplicates".into());
        }
        Ok(())
    }

    fn is_normal(&self, class: usize) -> bool {
        self.normal_classes.contains(&class)
    }

    fn is_attack(&self, class: usize) -> bool {
        match &self.attack_classes {
            Some(a) => a.contains(&class),
            None => !self.is_normal(class),
        }
    }
}

/// Per-class weights `w_i = log(N_min + n) / log(N_i + n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

pub fn class_weights(class_counts: &[usize], n: f64) -> Result<ClassWeights> {
    let Some(&n_min) = class_counts.iter().min() else {
        return Err(Error::InvalidArgument("no classes".into()));
    };
    if n_min == 0 {
        return Err(Error::InvalidArgument("every class needs at least one sample".into()));
    }
    if n_min as f64 + n <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "log(N + n) is not positive for N = {n_min}, n = {n}"
        )));
    }
    let num = (n_min as f64 + n).ln();
    Ok(ClassWeights(class_counts.iter().map(|&c| num / (c as f64 + n).ln()).collect()))
}

/// Scalar value and gradient of one loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// Supervised contrastive loss summed over anchors.
///
/// For anchor `i` with positives `P(i) = {j ≠ i : y_j = y_i}`:
/// `L_i = −1/|P(i)| Σ_{j∈P(i)} log( exp(z_i·z_j/τ) / Σ_{k≠i} exp(z_i·z_k/τ) )`,
/// and anchors without positives contribute 0.
pub fn supervised_contrastive(z: ArrayView2<f64>, labels: &[usize], temperature: f64) -> Result<LossValue> {
    let (n, d) = z.dim();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings, {} labels", labels.len())));
    }
    for (i, row) in z.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!("embedding row {i} has norm {norm}, expected 1")));
        }
    }
    let mut grad = Array2::<f64>::zeros((n, d));
    if n < 2 {
        return Ok(LossValue { value: 0.0, grad });
    }
    let inv_t = 1.0 / temperature;
    let sim = z.dot(&z.t()) * inv_t;

    // dL/ds_ik accumulated into a coefficient matrix, then mapped to z.
    let mut coef = Array2::<f64>::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        let positives = labels.iter().enumerate().filter(|&(j, &y)| j != i && y == labels[i]).count();
        if positives == 0 {
            continue;
        }
        let row = sim.row(i);
        let max = (0..n).filter(|&k| k != i).map(|k| row[k]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..n).filter(|&k| k != i).map(|k| (row[k] - max).exp()).sum();
        let lse = max + sum.ln();
        let inv_p = 1.0 / positives as f64;
        let mut li = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let q = (row[k] - lse).exp();
            let pos = labels[k] == labels[i];
            if pos {
                li -= inv_p * (row[k] - lse);
            }
            coef[[i, k]] = q - if pos { inv_p } else { 0.0 };
        }
        total += li;
    }
    // s_ik = z_i·z_k/τ: dL/dz_i += Σ_k c_ik z_k/τ and dL/dz_k += c_ik z_i/τ.
    let sym = &coef + &coef.t();
    grad.assign(&(sym.dot(&z) * inv_t));
    Ok(LossValue { value: total, grad })
}

/// Reset weight per sample from predicted and true classes.
pub fn reset_weights(pred: &[usize], truth: &[usize], config: &LossConfig) -> Vec<f64> {
    pred.iter()
        .zip(truth)
        .map(|(&p, &t)| match config.reset_mode {
            ResetMode::BoundaryCrossing => {
                let crosses = p != t
                    && ((config.is_normal(p) && config.is_attack(t)) || (config.is_attack(p) && config.is_normal(t)));
                if crosses {
                    config.reset_alpha
                } else {
                    1.0
                }
            }
            ResetMode::Literal => {
                if p != t {
                    config.reset_alpha
                } else {
                    0.0
                }
            }
        })
        .collect()
}

/// Weighted cross-entropy `−1/K Σ_i w_{y_i} log(w_p,i · p_{i,y_i})`, with
/// `K` the batch size and the log argument clamped at [`PROB_FLOOR`].
/// The gradient is taken with respect to the logits that produced `probs`.
pub fn weighted_ce(probs: ArrayView2<f64>, truth: &[usize], weights: &ClassWeights, reset: &[f64]) -> Result<LossValue> {
    let (k, m) = probs.dim();
    if truth.len() != k || reset.len() != k || weights.0.len() != m {
        return Err(Error::Shape(format!(
            "{k}x{m} probabilities, {} labels, {} reset weights, {} class weights",
            truth.len(),
            reset.len(),
            weights.0.len()
        )));
    }
    let mut grad = Array2::<f64>::zeros((k, m));
    if k == 0 {
        return Ok(LossValue { value: 0.0, grad });
    }
    let inv_k = 1.0 / k as f64;
    let mut total = 0.0;
    for i in 0..k {
        let y = truth[i];
        if y >= m {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        let w = weights.0[y];
        let p = probs[[i, y]].max(PROB_FLOOR);
        let arg = reset[i] * p;
        if arg > PROB_FLOOR && probs[[i, y]] > PROB_FLOOR {
            total -= w * arg.ln();
            // d(−log p_y)/d logits = p − e_y; the reset factor is constant.
            let mut row = grad.row_mut(i);
            row.assign(&probs.row(i));
            row[y] -= 1.0;
            row *= w * inv_k;
        } else {
            total -= w * arg.max(PROB_FLOOR).ln();
        }
    }
    Ok(LossValue { value: total * inv_k, grad })
}

/// `β(e) = max(β_min, β_start / (1 + e))`.
pub fn beta_schedule(epoch: usize, total_epochs: usize, config: &LossConfig) -> f64 {
    debug_assert!(total_epochs >= 1);
    if !config.use_scl {
        return 0.0;
    }
    (config.beta_start / (1.0 + epoch as f64)).max(config.beta_min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_scl: f64,
    pub l_wce: f64,
    pub l_hy: f64,
    pub beta_used: f64,
    pub grad_z: Array2<f64>,
    pub grad_logits: Array2<f64>,
}

/// Full objective for one batch with β from the schedule.
pub fn hybrid(
    z: ArrayView2<f64>,
    probs: ArrayView2<f64>,
    labels: &[usize],
    class_counts: &[usize],
    epoch: usize,
    total_epochs: usize,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let beta = beta_schedule(epoch, total_epochs, config);
    hybrid_with_beta(z, probs, labels, class_counts, beta, None, config)
}

/// Full objective with an explicit β. When `scl_rows` is given only those
/// rows enter the contrastive term; every row enters the cross-entropy.
pub fn hybrid_with_beta(
    z: ArrayView2<f64>,
    probs: ArrayView2<f64>,
    labels: &[usize],
    class_counts: &[usize],
    beta: f64,
    scl_rows: Option<&[usize]>,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside [0, 1]")));
    }
    let n = labels.len();
    let m = probs.ncols();
    let weights = if config.use_class_weights {
        class_weights(class_counts, config.smoothing_n)?
    } else {
        ClassWeights(vec![1.0; m])
    };
    let pred = argmax_rows(probs);
    let reset = if config.use_class_weights {
        reset_weights(&pred, labels, config)
    } else {
        vec![1.0; n]
    };
    let wce = weighted_ce(probs, labels, &weights, &reset)?;

    let scl = match scl_rows {
        None => supervised_contrastive(z, labels, config.temperature)?,
        Some(rows) => {
            let sub = z.select(Axis(0), rows);
            let sub_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let part = supervised_contrastive(sub.view(), &sub_labels, config.temperature)?;
            let mut grad = Array2::<f64>::zeros(z.dim());
            for (g, &r) in part.grad.rows().into_iter().zip(rows) {
                grad.row_mut(r).assign(&g);
            }
            LossValue { value: part.value, grad }
        }
    };

    Ok(LossBreakdown {
        l_scl: scl.value,
        l_wce: wce.value,
        l_hy: (1.0 - beta) * wce.value + beta * scl.value,
        beta_used: beta,
        grad_z: scl.grad * beta,
        grad_logits: wce.grad * (1.0 - beta),
    })
}
