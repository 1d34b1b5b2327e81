use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::Result;
use crate::rng;

use super::config::ModelConfig;

/// Every learnable tensor of the network. The same type holds gradients
/// and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub expand_w: Array2<f64>,
    pub expand_b: Array1<f64>,
    /// `[kernel*Cin, Cout]` per layer.
    pub conv_w: Vec<Array2<f64>>,
    pub conv_b: Vec<Array1<f64>>,
    pub proj1_w: Array2<f64>,
    pub proj1_b: Array1<f64>,
    pub proj2_w: Array2<f64>,
    pub proj2_b: Array1<f64>,
    pub cls_w: Array2<f64>,
    pub cls_b: Array1<f64>,
}

pub type ParamGradients = ModelParams;

const TENSOR_NAMES: [&str; 18] = [
    "expand.weight",
    "expand.bias",
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "conv4.weight",
    "conv4.bias",
    "conv5.weight",
    "conv5.bias",
    "proj1.weight",
    "proj1.bias",
    "proj2.weight",
    "proj2.bias",
    "cls.weight",
    "cls.bias",
];

impl ModelParams {
    /// Uniform fan-in scaled weights, zero biases. Layers followed by a ReLU
    /// use bound `sqrt(6/fan_in)`, linear outputs `sqrt(3/fan_in)`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, &[rng::TAG_INIT]);
        let mut uniform = |rows: usize, cols: usize, gain: f64| {
            let bound = (gain / rows as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
        };
        let k = config.kernel_size;
        let expand_w = uniform(config.input_dim, config.expand_dim, 3.0);
        let conv_w = (0..5)
            .map(|i| uniform(k * config.conv_in(i), config.conv_channels[i], 6.0))
            .collect();
        let proj1_w = uniform(config.repr_dim, config.proj_hidden_dim, 6.0);
        let proj2_w = uniform(config.proj_hidden_dim, config.proj_dim, 3.0);
        let cls_w = uniform(config.repr_dim, config.num_classes, 3.0);
        Ok(Self {
            expand_w,
            expand_b: Array1::zeros(config.expand_dim),
            conv_w,
            conv_b: config.conv_channels.iter().map(|&c| Array1::zeros(c)).collect(),
            proj1_w,
            proj1_b: Array1::zeros(config.proj_hidden_dim),
            proj2_w,
            proj2_b: Array1::zeros(config.proj_dim),
            cls_w,
            cls_b: Array1::zeros(config.num_classes),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.fill(0.0));
        z
    }

    /// `(name, shape, values)` of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let mut list: Vec<(Vec<usize>, &[f64])> = Vec::with_capacity(18);
        list.push((self.expand_w.shape().to_vec(), self.expand_w.as_slice().unwrap()));
        list.push((self.expand_b.shape().to_vec(), self.expand_b.as_slice().unwrap()));
        let pairs = self
            .conv_w
            .iter()
            .zip(&self.conv_b)
            .chain([(&self.proj1_w, &self.proj1_b), (&self.proj2_w, &self.proj2_b), (&self.cls_w, &self.cls_b)]);
        for (w, b) in pairs {
            list.push((w.shape().to_vec(), w.as_slice().unwrap()));
            list.push((b.shape().to_vec(), b.as_slice().unwrap()));
        }
        TENSOR_NAMES
            .iter()
            .zip(list)
            .map(|(name, (shape, data))| (*name, shape, data))
            .collect()
    }

    /// Visit every tensor mutably, in the order of [`ModelParams::tensors`].
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64])) {
        let mut names = TENSOR_NAMES.iter();
        let mut visit = |data: &mut [f64]| f(names.next().expect("tensor name"), data);
        visit(self.expand_w.as_slice_mut().unwrap());
        visit(self.expand_b.as_slice_mut().unwrap());
        for (w, b) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()) {
            visit(w.as_slice_mut().unwrap());
            visit(b.as_slice_mut().unwrap());
        }
        for (w, b) in [
            (&mut self.proj1_w, &mut self.proj1_b),
            (&mut self.proj2_w, &mut self.proj2_b),
            (&mut self.cls_w, &mut self.cls_b),
        ] {
            visit(w.as_slice_mut().unwrap());
            visit(b.as_slice_mut().unwrap());
        }
    }

    /// Mutable slices of every tensor, in the order of [`ModelParams::tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(18);
        out.push(self.expand_w.as_slice_mut().unwrap());
        out.push(self.expand_b.as_slice_mut().unwrap());
        for (w, b) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()) {
            out.push(w.as_slice_mut().unwrap());
            out.push(b.as_slice_mut().unwrap());
        }
        for (w, b) in [
            (&mut self.proj1_w, &mut self.proj1_b),
            (&mut self.proj2_w, &mut self.proj2_b),
            (&mut self.cls_w, &mut self.cls_b),
        ] {
            out.push(w.as_slice_mut().unwrap());
            out.push(b.as_slice_mut().unwrap());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    /// Check tensor shapes against a configuration.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        ModelParams::shape_template(config)
            .iter()
            .zip(self.tensors())
            .all(|(shape, (_, s, _))| *shape == s)
            && self.conv_w.len() == 5
    }

    pub(crate) fn shape_template(config: &ModelConfig) -> Vec<Vec<usize>> {
        let k = config.kernel_size;
        let mut shapes = vec![vec![config.input_dim, config.expand_dim], vec![config.expand_dim]];
        for i in 0..5 {
            shapes.push(vec![k * config.conv_in(i), config.conv_channels[i]]);
            shapes.push(vec![config.conv_channels[i]]);
        }
        shapes.push(vec![config.repr_dim, config.proj_hidden_dim]);
        shapes.push(vec![config.proj_hidden_dim]);
        shapes.push(vec![config.proj_hidden_dim, config.proj_dim]);
        shapes.push(vec![config.proj_dim]);
        shapes.push(vec![config.repr_dim, config.num_classes]);
        shapes.push(vec![config.num_classes]);
        shapes
    }

    /// Rebuild from flat tensors in [`ModelParams::tensors`] order.
    pub(crate) fn from_flat(config: &ModelConfig, tensors: Vec<Vec<f64>>) -> Option<Self> {
        let shapes = Self::shape_template(config);
        if tensors.len() != shapes.len() {
            return None;
        }
        let mut mats: Vec<Array2<f64>> = Vec::new();
        let mut vecs: Vec<Array1<f64>> = Vec::new();
        for (shape, data) in shapes.into_iter().zip(tensors) {
            match shape.as_slice() {
                [r, c] => mats.push(Array2::from_shape_vec((*r, *c), data).ok()?),
                [n] if *n == data.len() => vecs.push(Array1::from(data)),
                _ => return None,
            }
        }
        let mut mats = mats.into_iter();
        let mut vecs = vecs.into_iter();
        let mut m = || mats.next();
        let mut v = || vecs.next();
        Some(Self {
            expand_w: m()?,
            expand_b: v()?,
            conv_w: (0..5).map(|_| m()).collect::<Option<_>>()?,
            conv_b: (0..5).map(|_| v()).collect::<Option<_>>()?,
            proj1_w: m()?,
            proj1_b: v()?,
            proj2_w: m()?,
            proj2_b: v()?,
            cls_w: m()?,
            cls_b: v()?,
        })
    }
}
