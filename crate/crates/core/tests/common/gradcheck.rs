//! Central finite-difference checks of every differentiable operation.
//!
//! Each check draws [`INSTANCES`] random instances, perturbs inputs by `H`,
//! and reports the worst relative error `‖a − n‖ / max(‖a‖, ‖n‖)`.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssids_core::loss::{hybrid_with_beta, supervised_contrastive, weighted_ce, ClassWeights, LossConfig};
use ssids_core::model::layers;
use ssids_core::model::{backward, forward_with_cache, ModelConfig, ModelParams, Mode};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

fn rand_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
}

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let den = na.max(nn);
    if den < 1e-12 {
        diff
    } else {
        diff / den
    }
}

/// Numeric gradient of `f` with respect to every entry of `x`.
fn numeric(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (i, j) = (idx / x.ncols(), idx % x.ncols());
        let orig = xp[[i, j]];
        xp[[i, j]] = orig + H;
        let up = f(&xp);
        xp[[i, j]] = orig - H;
        let down = f(&xp);
        xp[[i, j]] = orig;
        g[[i, j]] = (up - down) / (2.0 * H);
    }
    g
}

fn numeric_vec(x: &Array1<f64>, f: impl Fn(&Array1<f64>) -> f64) -> Array1<f64> {
    let m = x.clone().insert_axis(ndarray::Axis(0));
    numeric(&m, |m| f(&m.row(0).to_owned())).row(0).to_owned()
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a * b).sum()
}

fn flat<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> Vec<f64> {
    a.iter().copied().collect()
}

/// Worst relative error over all instances and checked tensors.
#[derive(Debug, Clone, Copy, Default)]
pub struct Worst {
    pub error: f64,
    pub instance: u64,
}

impl Worst {
    fn record(&mut self, seed: u64, analytic: &[f64], num: &[f64]) {
        let e = rel_err(analytic, num);
        if e > self.error || e.is_nan() {
            self.error = e;
            self.instance = seed;
        }
    }
}

pub fn dense_layer() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (n, i, o) = (r.random_range(1..5), r.random_range(1..6), r.random_range(1..6));
        let (x, w, b, g) = (rand_mat(&mut r, n, i), rand_mat(&mut r, i, o), rand_mat(&mut r, 1, o).row(0).to_owned(), rand_mat(&mut r, n, o));
        let (dx, dw, db) = layers::dense_backward(x.view(), &w, &g);
        let f = |x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>| dot(&layers::dense_forward(x.view(), w, b), &g);
        worst.record(seed, &flat(&dx), &flat(&numeric(&x, |x| f(x, &w, &b))));
        worst.record(seed, &flat(&dw), &flat(&numeric(&w, |w| f(&x, w, &b))));
        worst.record(seed, &flat(&db), &flat(&numeric_vec(&b, |b| f(&x, &w, b))));
    }
    worst
}

pub fn conv1d_layer() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let (n, len, cin, cout) = (r.random_range(1..4), r.random_range(1..7), r.random_range(1..4), r.random_range(1..4));
        let k = [1, 3, 5][r.random_range(0..3)];
        let x = rand_mat(&mut r, n * len, cin);
        let w = rand_mat(&mut r, k * cin, cout);
        let b = rand_mat(&mut r, 1, cout).row(0).to_owned();
        let g = rand_mat(&mut r, n * len, cout);
        let (_, cols) = layers::conv1d_forward(&x, len, &w, &b);
        let (dx, dw, db) = layers::conv1d_backward(&cols, len, cin, &w, &g);
        let f = |x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>| dot(&layers::conv1d_forward(x, len, w, b).0, &g);
        worst.record(seed, &flat(&dx), &flat(&numeric(&x, |x| f(x, &w, &b))));
        worst.record(seed, &flat(&dw), &flat(&numeric(&w, |w| f(&x, w, &b))));
        worst.record(seed, &flat(&db), &flat(&numeric_vec(&b, |b| f(&x, &w, b))));
    }
    worst
}

pub fn global_average_pooling() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(200 + seed);
        let (n, len, c) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..5));
        let x = rand_mat(&mut r, n * len, c);
        let g = rand_mat(&mut r, n, c);
        let dx = layers::global_avg_pool_backward(&g, len);
        let num = numeric(&x, |x| dot(&layers::global_avg_pool(x, len), &g));
        worst.record(seed, &flat(&dx), &flat(&num));
    }
    worst
}

pub fn l2_normalization() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(300 + seed);
        let (n, d) = (r.random_range(1..5), r.random_range(2..6));
        let v = rand_mat(&mut r, n, d);
        let g = rand_mat(&mut r, n, d);
        let (z, norms) = layers::l2_normalize(&v);
        let dv = layers::l2_normalize_backward(&z, &norms, &g);
        let num = numeric(&v, |v| dot(&layers::l2_normalize(v).0, &g));
        worst.record(seed, &flat(&dv), &flat(&num));
    }
    worst
}

pub fn softmax_layer() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(400 + seed);
        let (n, m) = (r.random_range(1..5), r.random_range(2..7));
        let x = rand_mat(&mut r, n, m) * 3.0;
        let g = rand_mat(&mut r, n, m);
        let p = layers::softmax(&x);
        let dx = layers::softmax_backward(&p, &g);
        let num = numeric(&x, |x| dot(&layers::softmax(x), &g));
        worst.record(seed, &flat(&dx), &flat(&num));
    }
    worst
}

/// SCL through the normalisation, so perturbations stay on the sphere.
pub fn supervised_contrastive_term() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(500 + seed);
        let (n, d) = (r.random_range(2..9), r.random_range(2..6));
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let tau = [0.05, 0.1, 0.5, 1.0][r.random_range(0..4)];
        let v = rand_mat(&mut r, n, d);
        let (z, norms) = layers::l2_normalize(&v);
        let gz = supervised_contrastive(z.view(), &labels, tau).unwrap().grad;
        let dv = layers::l2_normalize_backward(&z, &norms, &gz);
        let num = numeric(&v, |v| supervised_contrastive(layers::l2_normalize(v).0.view(), &labels, tau).unwrap().value);
        worst.record(seed, &flat(&dv), &flat(&num));
    }
    worst
}

/// WCE through the softmax, with random class and reset weights.
pub fn weighted_cross_entropy_term() -> Worst {
    let mut worst = Worst::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(600 + seed);
        let (n, m) = (r.random_range(1..8), r.random_range(2..6));
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..m)).collect();
        let w = ClassWeights((0..m).map(|_| r.random_range(0.1..1.0)).collect());
        let reset: Vec<f64> = (0..n).map(|_| [1.0, 0.95][r.random_range(0..2)]).collect();
        let logits = rand_mat(&mut r, n, m) * 2.0;
        let grad = weighted_ce(layers::softmax(&logits).view(), &labels, &w, &reset).unwrap().grad;
        let num = numeric(&logits, |l| weighted_ce(layers::softmax(l).view(), &labels, &w, &reset).unwrap().value);
        worst.record(seed, &flat(&grad), &flat(&num));
    }
    worst
}

fn tiny_model(seed: u64, d: usize, m: usize) -> ModelConfig {
    ModelConfig {
        expand_dim: 12,
        channels: 3,
        length: 4,
        conv_channels: vec![4, 3, 4, 3, 5],
        repr_dim: 5,
        proj_hidden_dim: 4,
        proj_dim: 3,
        dropout_rate: 0.25,
        seed,
        ..ModelConfig::for_dims(d, m)
    }
}

/// Hybrid loss on top of the full network, which covers the residual skip,
/// dropout masks and every parameter tensor.
pub fn hybrid_through_network() -> Worst {
    let mut worst = Worst::default();
    let cfg_loss = LossConfig::default();
    for seed in 0..INSTANCES {
        let mut r = ChaCha8Rng::seed_from_u64(700 + seed);
        let (n, d, m) = (r.random_range(2..6), r.random_range(1..5), r.random_range(2..4));
        let cfg = tiny_model(seed, d, m);
        // Zero biases put dead units exactly on the ReLU kink; evaluate at a
        // generic point instead.
        let mut params = ModelParams::init(&cfg).unwrap();
        params.for_each_mut(|name, data| {
            if name.ends_with(".bias") {
                data.iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
            }
        });
        let x = rand_mat(&mut r, n, d) * 2.0;
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..m)).collect();
        let counts: Vec<usize> = (0..m).map(|_| r.random_range(1..50)).collect();
        let beta = r.random_range(0.0..1.0);
        let mode = Mode::Stochastic { seed: 1000 + seed };
        let loss_of = |p: &ModelParams, x: &Array2<f64>| {
            let (out, _) = forward_with_cache(p, &cfg, x.view(), mode).unwrap();
            hybrid_with_beta(out.embedding.view(), out.probabilities.view(), &labels, &counts, beta, None, &cfg_loss)
                .unwrap()
                .l_hy
        };
        let (out, cache) = forward_with_cache(&params, &cfg, x.view(), mode).unwrap();
        let loss = hybrid_with_beta(out.embedding.view(), out.probabilities.view(), &labels, &counts, beta, None, &cfg_loss).unwrap();
        let grads = backward(&params, &cfg, &cache, &loss.grad_z, &loss.grad_logits).unwrap();

        let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, _, g)| g.to_vec()).collect();
        for (t, a) in analytic.iter().enumerate() {
            let mut num = vec![0.0; a.len()];
            for (k, slot) in num.iter_mut().enumerate() {
                let mut p = params.clone();
                p.slices_mut()[t][k] += H;
                let up = loss_of(&p, &x);
                p.slices_mut()[t][k] -= 2.0 * H;
                let down = loss_of(&p, &x);
                *slot = (up - down) / (2.0 * H);
            }
            worst.record(seed, a, &num);
        }
    }
    worst
}
