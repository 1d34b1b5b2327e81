//! Differentiable building blocks with hand-written adjoints.
//!
//! Convolutional activations are stored channel-last as `[N*L, C]` matrices
//! (row `n*L + l` holds position `l` of sample `n`), which turns a
//! same-padded 1-D convolution into one im2col gather and one GEMM.

use ndarray::{Array1, Array2, ArrayView2, Axis};

/// `y = x w + b`.
pub fn dense_forward(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward(
    x: ArrayView2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    (dy.dot(&w.t()), x.t().dot(dy), dy.sum_axis(Axis(0)))
}

/// Gather `kernel` neighbouring positions (zero padded) into one row.
/// Output column `k*C + c` holds channel `c` at offset `k - kernel/2`.
pub fn im2col(x: &Array2<f64>, length: usize, kernel: usize) -> Array2<f64> {
    let (rows, cin) = x.dim();
    debug_assert_eq!(rows % length, 0);
    let pad = kernel / 2;
    let width = kernel * cin;
    let mut cols = Array2::<f64>::zeros((rows, width));
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    for s in 0..rows / length {
        for l in 0..length {
            let out = (s * length + l) * width;
            for k in 0..kernel {
                let Some(src) = (l + k).checked_sub(pad).filter(|&p| p < length) else {
                    continue;
                };
                let src = (s * length + src) * cin;
                cs[out + k * cin..out + (k + 1) * cin].copy_from_slice(&xs[src..src + cin]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add column gradients back to positions.
pub fn col2im(dcols: &Array2<f64>, length: usize, kernel: usize, cin: usize) -> Array2<f64> {
    let rows = dcols.nrows();
    let pad = kernel / 2;
    let width = kernel * cin;
    let mut dx = Array2::<f64>::zeros((rows, cin));
    let dcols = dcols.as_standard_layout();
    let ds = dcols.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().expect("standard layout");
    for s in 0..rows / length {
        for l in 0..length {
            let out = (s * length + l) * width;
            for k in 0..kernel {
                let Some(src) = (l + k).checked_sub(pad).filter(|&p| p < length) else {
                    continue;
                };
                let src = (s * length + src) * cin;
                for c in 0..cin {
                    xs[src + c] += ds[out + k * cin + c];
                }
            }
        }
    }
    dx
}

/// Same-padded 1-D convolution. `w` is `[kernel*Cin, Cout]`. Returns the
/// output and the im2col matrix needed by the backward pass.
pub fn conv1d_forward(
    x: &Array2<f64>,
    length: usize,
    w: &Array2<f64>,
    b: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let kernel = w.nrows() / x.ncols();
    let cols = im2col(x, length, kernel);
    let mut y = cols.dot(w);
    y += b;
    (y, cols)
}

/// Returns `(dx, dw, db)`.
pub fn conv1d_backward(
    cols: &Array2<f64>,
    length: usize,
    cin: usize,
    w: &Array2<f64>,
    dy: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let kernel = w.nrows() / cin;
    let dw = cols.t().dot(dy);
    let db = dy.sum_axis(Axis(0));
    let dcols = dy.dot(&w.t());
    (col2im(&dcols, length, kernel, cin), dw, db)
}

pub fn relu(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(out: &Array2<f64>, dy: &mut Array2<f64>) {
    ndarray::Zip::from(dy).and(out).for_each(|g, &o| {
        if o <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Mean over the `length` positions of each sample: `[N*L, C] -> [N, C]`.
pub fn global_avg_pool(x: &Array2<f64>, length: usize) -> Array2<f64> {
    let (rows, c) = x.dim();
    let n = rows / length;
    let mut out = Array2::<f64>::zeros((n, c));
    for s in 0..n {
        let block = x.slice(ndarray::s![s * length..(s + 1) * length, ..]);
        out.row_mut(s).assign(&block.sum_axis(Axis(0)));
    }
    out /= length as f64;
    out
}

pub fn global_avg_pool_backward(dy: &Array2<f64>, length: usize) -> Array2<f64> {
    let (n, c) = dy.dim();
    let scale = 1.0 / length as f64;
    Array2::from_shape_fn((n * length, c), |(row, ch)| dy[[row / length, ch]] * scale)
}

/// Row-wise ℓ2 normalisation. Returns `(z, norms)`.
pub fn l2_normalize(v: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let norms = v.map_axis(Axis(1), |row| row.dot(&row).sqrt().max(1e-12));
    let mut z = v.clone();
    for (mut row, &n) in z.rows_mut().into_iter().zip(norms.iter()) {
        row /= n;
    }
    (z, norms)
}

/// `dv = (I/‖v‖ − v vᵀ/‖v‖³) g = (g − z (z·g)) / ‖v‖`.
pub fn l2_normalize_backward(z: &Array2<f64>, norms: &Array1<f64>, dz: &Array2<f64>) -> Array2<f64> {
    let mut dv = dz.clone();
    for ((mut g, zr), &n) in dv.rows_mut().into_iter().zip(z.rows()).zip(norms.iter()) {
        let proj = zr.dot(&g);
        g.scaled_add(-proj, &zr);
        g /= n;
    }
    dv
}

/// Numerically stable row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Vector-Jacobian product of softmax: `p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut out = dp.clone();
    for (mut g, pr) in out.rows_mut().into_iter().zip(p.rows()) {
        let dot = g.dot(&pr);
        g.mapv_inplace(|v| v - dot);
        g *= &pr;
    }
    out
}

/// `[N, C*L]` (channel-major within a sample) to channel-last `[N*L, C]`.
pub fn to_channel_last(h: &Array2<f64>, channels: usize, length: usize) -> Array2<f64> {
    let n = h.nrows();
    Array2::from_shape_fn((n * length, channels), |(row, c)| h[[row / length, c * length + row % length]])
}

pub fn from_channel_last(x: &Array2<f64>, channels: usize, length: usize) -> Array2<f64> {
    let n = x.nrows() / length;
    Array2::from_shape_fn((n, channels * length), |(s, e)| x[[s * length + e % length, e / length]])
}
