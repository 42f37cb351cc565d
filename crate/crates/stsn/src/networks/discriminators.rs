//! Image discriminators, the feature discriminator, and the linear
//! classifier head.

use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Param, Var};
use crate::layers::{Conv2d, HasParams, InstanceNorm2d, Linear, WeightInit};
use crate::ops::conv_out_dim;
use crate::tensor::Element;

use super::scaled;

const INIT: WeightInit = WeightInit::Normal { std: 0.02 };

/// Per-domain image discriminator: stacked Conv-IN-LReLU(0.2) blocks and a
/// dense head emitting one raw (un-squashed) score per image, as the
/// least-squares adversarial objective expects.
pub struct ImageDiscriminator<T> {
    blocks: Vec<(Conv2d<T>, InstanceNorm2d<T>)>,
    head: Linear<T>,
    image_size: usize,
}

impl<T: Element> ImageDiscriminator<T> {
    pub fn new(name: &str, image_size: usize, width_scale: f64, rng: &mut ChaCha12Rng) -> Self {
        // (kernel, width, stride, pad); all four blocks engage at ≥ 32 px.
        // Below that, trailing blocks whose output would collapse under 2×2
        // are dropped — instance norm is undefined on a single position.
        let plan = [
            (6, scaled(64, width_scale), 2, 2),
            (4, scaled(128, width_scale), 2, 1),
            (4, scaled(256, width_scale), 2, 1),
            (4, scaled(512, width_scale), 2, 1),
        ];
        let mut blocks = Vec::new();
        let mut side = image_size;
        let mut cin = 3;
        for (i, (k, w, s, p)) in plan.into_iter().enumerate() {
            let out = conv_out_dim(side, k, s, p);
            if out < 2 {
                break;
            }
            blocks.push((
                Conv2d::new(&format!("{name}.b{i}"), k, cin, w, s, p, false, INIT, rng),
                InstanceNorm2d::new(),
            ));
            side = out;
            cin = w;
        }
        assert!(!blocks.is_empty(), "image discriminator needs at least an 8 px input");
        Self {
            blocks,
            head: Linear::new(&format!("{name}.head"), side * side * cin, 1, INIT, rng),
            image_size,
        }
    }

    /// Scores a batch of images, returning raw (batch, 1) values.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        assert_eq!(
            g.value(x).shape()[1],
            self.image_size,
            "discriminator was built for {} px inputs",
            self.image_size
        );
        let mut h = x;
        for (conv, inorm) in &self.blocks {
            h = conv.forward(g, h);
            h = inorm.forward(g, h);
            h = g.leaky_relu(h, T::from_f64(0.2));
        }
        let shape = g.value(h).shape().to_vec();
        let flat = shape[1] * shape[2] * shape[3];
        let h = g.reshape(h, &[shape[0], flat]);
        self.head.forward(g, h)
    }
}

impl<T: Element> HasParams<T> for ImageDiscriminator<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        for (conv, _) in &self.blocks {
            conv.collect_params(out);
        }
        self.head.collect_params(out);
    }
}

/// Feature discriminator on pooled structure vectors: two dropout-regularized
/// hidden layers and a sigmoid output giving P(target domain).
pub struct FeatureDiscriminator<T> {
    fc1: Linear<T>,
    fc2: Linear<T>,
    fc3: Linear<T>,
}

impl<T: Element> FeatureDiscriminator<T> {
    pub fn new(name: &str, c_g: usize, rng: &mut ChaCha12Rng) -> Self {
        Self {
            fc1: Linear::new(&format!("{name}.fc1"), c_g, 1024, INIT, rng),
            fc2: Linear::new(&format!("{name}.fc2"), 1024, 1024, INIT, rng),
            fc3: Linear::new(&format!("{name}.fc3"), 1024, 1, INIT, rng),
        }
    }

    /// Maps (batch, c_g) structure vectors to (batch, 1) probabilities.
    /// Dropout draws from `rng` in training mode only.
    pub fn forward(&self, g: &mut Graph<T>, f: Var, rng: &mut ChaCha12Rng) -> Var {
        let h = self.fc1.forward(g, f);
        let h = g.relu(h);
        let h = g.dropout(h, 0.5, rng);
        let h = self.fc2.forward(g, h);
        let h = g.relu(h);
        let h = g.dropout(h, 0.5, rng);
        let h = self.fc3.forward(g, h);
        g.sigmoid(h)
    }
}

impl<T: Element> HasParams<T> for FeatureDiscriminator<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        self.fc1.collect_params(out);
        self.fc2.collect_params(out);
        self.fc3.collect_params(out);
    }
}

/// Linear classification head on pooled structure vectors.
pub struct Classifier<T> {
    fc: Linear<T>,
}

impl<T: Element> Classifier<T> {
    pub fn new(name: &str, c_g: usize, num_classes: usize, rng: &mut ChaCha12Rng) -> Self {
        Self { fc: Linear::new(&format!("{name}.fc"), c_g, num_classes, INIT, rng) }
    }

    /// Maps (batch, c_g) structure vectors to (batch, K) logits.
    pub fn forward(&self, g: &mut Graph<T>, f: Var) -> Var {
        self.fc.forward(g, f)
    }
}

impl<T: Element> HasParams<T> for Classifier<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        self.fc.collect_params(out);
    }
}
