//! Network building blocks that own their parameters.
//!
//! Every layer exposes `forward(&self, graph, x)` plus `collect_params`, so
//! networks are plain structs of layers and a parameter list per network is
//! one traversal. All trainable weights draw from a seeded RNG at
//! construction; names are hierarchical ("g.up3.conv.weight") and become the
//! checkpoint keys.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::graph::{Graph, Param, Var};
use crate::ops::{conv_out_dim, conv_transpose_out_dim};
use crate::tensor::{Element, Tensor};

/// Weight initialization scheme.
#[derive(Copy, Clone, Debug)]
pub enum WeightInit {
    /// Zero-mean Gaussian with fixed standard deviation — the default 0.02
    /// used for every trainable network here.
    Normal { std: f64 },
    /// Gaussian scaled by √(2/fan_in); used for the fixed-random perceptual
    /// extractor so activations survive a deep untrained stack.
    HeNormal,
}

impl WeightInit {
    pub fn sample<T: Element>(
        self,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha12Rng,
    ) -> Tensor<T> {
        let std = match self {
            WeightInit::Normal { std } => std,
            WeightInit::HeNormal => (2.0 / fan_in as f64).sqrt(),
        };
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                T::from_f64(z * std)
            })
            .collect();
        Tensor::from_vec(shape, data)
    }
}

/// Anything that owns parameters (trainable or buffers).
pub trait HasParams<T: Element> {
    fn collect_params(&self, out: &mut Vec<Param<T>>);

    fn params(&self) -> Vec<Param<T>> {
        let mut v = Vec::new();
        self.collect_params(&mut v);
        v
    }
}

/// 2-D convolution with weights (k,k,Cin,Cout) and optional bias.
///
/// Cloning a layer clones its `Param` handles, which alias the same storage;
/// this is how the stem is shared between encoders.
#[derive(Clone)]
pub struct Conv2d<T> {
    pub w: Param<T>,
    pub b: Option<Param<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: WeightInit,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let w = Param::new(
            format!("{name}.weight"),
            init.sample(&[k, k, cin, cout], k * k * cin, rng),
        );
        let b = bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])));
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let w = g.param(&self.w);
        let mut y = g.conv2d(x, w, self.stride, self.pad);
        if let Some(b) = &self.b {
            let bv = g.param(b);
            y = g.add_bias(y, bv);
        }
        y
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        conv_out_dim(in_dim, self.w.shape()[0], self.stride, self.pad)
    }
}

impl<T: Element> HasParams<T> for Conv2d<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        out.push(self.w.clone());
        if let Some(b) = &self.b {
            out.push(b.clone());
        }
    }
}

/// Transposed convolution with weights (k,k,Cout,Cin) and optional bias.
#[derive(Clone)]
pub struct ConvT2d<T> {
    pub w: Param<T>,
    pub b: Option<Param<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> ConvT2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: WeightInit,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        let w = Param::new(
            format!("{name}.weight"),
            init.sample(&[k, k, cout, cin], k * k * cin, rng),
        );
        let b = bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])));
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let w = g.param(&self.w);
        let mut y = g.conv2d_transpose(x, w, self.stride, self.pad);
        if let Some(b) = &self.b {
            let bv = g.param(b);
            y = g.add_bias(y, bv);
        }
        y
    }

    pub fn out_dim(&self, in_dim: usize) -> usize {
        conv_transpose_out_dim(in_dim, self.w.shape()[0], self.stride, self.pad)
    }
}

impl<T: Element> HasParams<T> for ConvT2d<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        out.push(self.w.clone());
        if let Some(b) = &self.b {
            out.push(b.clone());
        }
    }
}

/// Fully-connected layer, weights (in, out).
#[derive(Clone)]
pub struct Linear<T> {
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Element> Linear<T> {
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        init: WeightInit,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        Self {
            w: Param::new(format!("{name}.weight"), init.sample(&[cin, cout], cin, rng)),
            b: Param::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let w = g.param(&self.w);
        let b = g.param(&self.b);
        let y = g.matmul(x, w);
        g.add_bias(y, b)
    }
}

impl<T: Element> HasParams<T> for Linear<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        out.push(self.w.clone());
        out.push(self.b.clone());
    }
}

/// Batch normalization with running statistics kept as checkpointed buffers.
#[derive(Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub eps: T,
    pub momentum: f64,
}

impl<T: Element> BatchNorm2d<T> {
    pub fn new(name: &str, c: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[c], T::ONE)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[c])),
            running_mean: Param::buffer(format!("{name}.running_mean"), Tensor::zeros(&[c])),
            running_var: Param::buffer(format!("{name}.running_var"), Tensor::full(&[c], T::ONE)),
            eps: T::from_f64(1e-5),
            momentum: 0.1,
        }
    }

    /// Train mode normalizes with batch statistics and folds them into the
    /// running buffers; eval mode normalizes with the running buffers.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        if g.is_train() {
            let shape = g.value(x).shape().to_vec();
            let m = shape[0] * shape[1] * shape[2];
            assert!(m > 1, "batch norm needs more than one value per channel in training");
            let (y, mean, var) = g.batch_norm2d_train(x, gamma, beta, self.eps);
            // Running update uses the unbiased variance, as is conventional.
            let unbias = T::from_f64(m as f64 / (m as f64 - 1.0));
            let mom = T::from_f64(self.momentum);
            let keep = T::ONE - mom;
            let rm = self.running_mean.value().zip(&mean, |r, b| keep * r + mom * b);
            let rv = self
                .running_var
                .value()
                .zip(&var, |r, b| keep * r + mom * (b * unbias));
            self.running_mean.set_value(rm);
            self.running_var.set_value(rv);
            y
        } else {
            let rm = self.running_mean.value();
            let rv = self.running_var.value();
            g.batch_norm2d_eval(x, gamma, beta, &rm, &rv, self.eps)
        }
    }
}

impl<T: Element> HasParams<T> for BatchNorm2d<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        out.push(self.gamma.clone());
        out.push(self.beta.clone());
        out.push(self.running_mean.clone());
        out.push(self.running_var.clone());
    }
}

/// Instance normalization (no affine parameters, nothing to checkpoint).
#[derive(Clone)]
pub struct InstanceNorm2d<T> {
    pub eps: T,
}

impl<T: Element> InstanceNorm2d<T> {
    pub fn new() -> Self {
        Self { eps: T::from_f64(1e-5) }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        g.instance_norm2d(x, self.eps)
    }
}

impl<T: Element> Default for InstanceNorm2d<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Layer normalization over channels at each spatial position.
#[derive(Clone)]
pub struct LayerNormC<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub eps: T,
}

impl<T: Element> LayerNormC<T> {
    pub fn new(name: &str, c: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[c], T::ONE)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[c])),
            eps: T::from_f64(1e-5),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        g.layer_norm_c(x, gamma, beta, self.eps)
    }
}

impl<T: Element> HasParams<T> for LayerNormC<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        out.push(self.gamma.clone());
        out.push(self.beta.clone());
    }
}
