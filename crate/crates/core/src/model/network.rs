use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

use super::config::ModelConfig;
use super::layers;
use super::params::{ModelParams, ParamGradients};

/// Dropout behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout off; the pass is a pure function of parameters and input.
    Eval,
    /// Dropout on with masks drawn from `seed` (training and MC passes).
    Stochastic { seed: u64 },
}

/// Outputs of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub representation: Vec<f64>,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Outputs of a batch, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub representation: Array2<f64>,
    pub embedding: Array2<f64>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

impl BatchOutput {
    pub fn len(&self) -> usize {
        self.logits.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> ForwardOutput {
        ForwardOutput {
            representation: self.representation.row(i).to_vec(),
            embedding: self.embedding.row(i).to_vec(),
            logits: self.logits.row(i).to_vec(),
            probabilities: self.probabilities.row(i).to_vec(),
        }
    }

    pub fn samples(&self) -> Vec<ForwardOutput> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    /// im2col matrices of the five conv inputs.
    cols: Vec<Array2<f64>>,
    /// Post-ReLU conv outputs before dropout.
    acts: Vec<Array2<f64>>,
    /// Inverted-dropout masks after conv2 and conv4 (`None` when inactive).
    masks: [Option<Array2<f64>>; 2],
    repr: Array2<f64>,
    proj_hidden: Array2<f64>,
    embedding: Array2<f64>,
    norms: Array1<f64>,
}

fn check_input(config: &ModelConfig, batch: &ArrayView2<f64>) -> Result<()> {
    if batch.ncols() != config.input_dim {
        return Err(Error::Shape(format!(
            "batch has {} columns, model expects {}",
            batch.ncols(),
            config.input_dim
        )));
    }
    if !batch.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("model input".into()));
    }
    Ok(())
}

fn dropout_mask(shape: (usize, usize), rate: f64, seed: u64, layer: u64) -> Array2<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut rng = rng::stream(seed, &[rng::TAG_DROPOUT, layer]);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { scale } else { 0.0 })
}

pub fn forward(
    params: &ModelParams,
    config: &ModelConfig,
    batch: ArrayView2<f64>,
    mode: Mode,
) -> Result<BatchOutput> {
    forward_with_cache(params, config, batch, mode).map(|(out, _)| out)
}

pub fn forward_with_cache(
    params: &ModelParams,
    config: &ModelConfig,
    batch: ArrayView2<f64>,
    mode: Mode,
) -> Result<(BatchOutput, ForwardCache)> {
    check_input(config, &batch)?;
    let length = config.length;
    let expanded = layers::dense_forward(batch, &params.expand_w, &params.expand_b);
    let x0 = layers::to_channel_last(&expanded, config.channels, length);

    let stochastic = match mode {
        Mode::Stochastic { seed } if config.dropout_rate > 0.0 => Some(seed),
        _ => None,
    };

    let mut cols = Vec::with_capacity(5);
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(5);
    let mut masks: [Option<Array2<f64>>; 2] = [None, None];
    let mut input = x0;
    for layer in 0..5 {
        if layer == 3 {
            // Residual skip: block-4 input is block-3 output plus block-1 output.
            input += &acts[0];
        }
        let (mut y, c) = layers::conv1d_forward(&input, length, &params.conv_w[layer], &params.conv_b[layer]);
        layers::relu(&mut y);
        cols.push(c);
        let next = match (layer, stochastic) {
            (1 | 3, Some(seed)) => {
                let mask = dropout_mask(y.dim(), config.dropout_rate, seed, layer as u64);
                let dropped = &y * &mask;
                masks[layer / 2] = Some(mask);
                dropped
            }
            _ => y.clone(),
        };
        acts.push(y);
        input = next;
    }

    let repr = layers::global_avg_pool(&acts[4], length);
    let mut proj_hidden = layers::dense_forward(repr.view(), &params.proj1_w, &params.proj1_b);
    layers::relu(&mut proj_hidden);
    let proj = layers::dense_forward(proj_hidden.view(), &params.proj2_w, &params.proj2_b);
    let (embedding, norms) = layers::l2_normalize(&proj);
    let logits = layers::dense_forward(repr.view(), &params.cls_w, &params.cls_b);
    let probabilities = layers::softmax(&logits);

    let out = BatchOutput {
        representation: repr.clone(),
        embedding: embedding.clone(),
        logits,
        probabilities,
    };
    let cache = ForwardCache {
        input: batch.to_owned(),
        cols,
        acts,
        masks,
        repr,
        proj_hidden,
        embedding,
        norms,
    };
    Ok((out, cache))
}

/// Reverse-mode gradients of every parameter given `∂L/∂z` and
/// `∂L/∂logits` for the batch recorded in `cache`.
pub fn backward(
    params: &ModelParams,
    config: &ModelConfig,
    cache: &ForwardCache,
    grad_embedding: &Array2<f64>,
    grad_logits: &Array2<f64>,
) -> Result<ParamGradients> {
    let n = cache.input.nrows();
    if grad_embedding.dim() != (n, config.proj_dim) || grad_logits.dim() != (n, config.num_classes) {
        return Err(Error::Shape(format!(
            "upstream gradients {:?} / {:?} do not match batch of {n} (proj {}, classes {})",
            grad_embedding.dim(),
            grad_logits.dim(),
            config.proj_dim,
            config.num_classes
        )));
    }
    let length = config.length;
    let mut grads = params.zeros_like();

    // Classification head.
    let (mut d_repr, dw, db) = layers::dense_backward(cache.repr.view(), &params.cls_w, grad_logits);
    grads.cls_w = dw;
    grads.cls_b = db;

    // Projection head.
    let d_proj = layers::l2_normalize_backward(&cache.embedding, &cache.norms, grad_embedding);
    let (mut d_hidden, dw, db) = layers::dense_backward(cache.proj_hidden.view(), &params.proj2_w, &d_proj);
    grads.proj2_w = dw;
    grads.proj2_b = db;
    layers::relu_backward(&cache.proj_hidden, &mut d_hidden);
    let (d_repr_proj, dw, db) = layers::dense_backward(cache.repr.view(), &params.proj1_w, &d_hidden);
    grads.proj1_w = dw;
    grads.proj1_b = db;
    d_repr += &d_repr_proj;

    // Conv stack, last to first.
    let mut d_act = layers::global_avg_pool_backward(&d_repr, length);
    let mut d_skip: Option<Array2<f64>> = None;
    for layer in (0..5).rev() {
        if layer == 0 {
            if let Some(skip) = d_skip.take() {
                d_act += &skip;
            }
        }
        // d_act is the gradient w.r.t. this layer's post-dropout output.
        if let Some(mask) = match layer {
            1 => cache.masks[0].as_ref(),
            3 => cache.masks[1].as_ref(),
            _ => None,
        } {
            d_act *= mask;
        }
        layers::relu_backward(&cache.acts[layer], &mut d_act);
        let (d_in, dw, db) =
            layers::conv1d_backward(&cache.cols[layer], length, config.conv_in(layer), &params.conv_w[layer], &d_act);
        grads.conv_w[layer] = dw;
        grads.conv_b[layer] = db;
        if layer == 3 {
            d_skip = Some(d_in.clone());
        }
        d_act = d_in;
    }

    let d_expanded = layers::from_channel_last(&d_act, config.channels, length);
    let (_, dw, db) = layers::dense_backward(cache.input.view(), &params.expand_w, &d_expanded);
    grads.expand_w = dw;
    grads.expand_b = db;
    Ok(grads)
}

/// Row-wise argmax, ties to the lowest index.
pub(crate) fn argmax_rows(m: ArrayView2<f64>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
