//! Structure encoder (shared across domains) and texture encoders (private
//! per domain, first conv block aliased with the structure encoder's stem).

use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Param, Var};
use crate::layers::{BatchNorm2d, Conv2d, HasParams, Linear, WeightInit};
use crate::tensor::Element;

use super::resnet::ResNetBody;
use super::{scaled, Backbone, StructureCode};

const INIT: WeightInit = WeightInit::Normal { std: 0.02 };

/// The first convolution block, shared by the structure encoder and both
/// texture encoders. Cloning aliases the underlying parameters.
#[derive(Clone)]
pub struct SharedStem<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    /// Output channel count after the stem.
    pub width: usize,
}

impl<T: Element> SharedStem<T> {
    fn new(name: &str, backbone: Backbone, rng: &mut ChaCha12Rng) -> Self {
        // Residual-18 uses the standard 7×7/2 stem; small-conv a 5×5/1.
        let (k, width, stride, pad) = match backbone {
            Backbone::Residual18 => (7, 64, 2, 3),
            Backbone::SmallConv => (5, 32, 1, 2),
        };
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), k, 3, width, stride, pad, false, INIT, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), width),
            width,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let h = self.conv.forward(g, x);
        let h = self.bn.forward(g, h);
        g.relu(h)
    }
}

impl<T: Element> HasParams<T> for SharedStem<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        self.conv.collect_params(out);
        self.bn.collect_params(out);
    }
}

/// Domain-shared structure encoder E_g.
pub enum StructureEncoder<T> {
    Residual18 {
        stem: SharedStem<T>,
        body: ResNetBody<T>,
    },
    SmallConv {
        stem: SharedStem<T>,
        conv2: Conv2d<T>,
        bn2: BatchNorm2d<T>,
        fc1: Linear<T>,
        fc2: Linear<T>,
    },
}

impl<T: Element> StructureEncoder<T> {
    pub fn new(name: &str, backbone: Backbone, rng: &mut ChaCha12Rng) -> Self {
        let stem = SharedStem::new(&format!("{name}.stem"), backbone, rng);
        match backbone {
            Backbone::Residual18 => StructureEncoder::Residual18 {
                stem,
                body: ResNetBody::new(name, rng),
            },
            Backbone::SmallConv => StructureEncoder::SmallConv {
                stem,
                conv2: Conv2d::new(&format!("{name}.conv2"), 5, 32, 64, 1, 2, false, INIT, rng),
                bn2: BatchNorm2d::new(&format!("{name}.bn2"), 64),
                // Dense sizes assume the canonical 32×32 glyph/digit input:
                // two stride-2 pools leave an 8×8×64 field.
                fc1: Linear::new(&format!("{name}.fc1"), 8 * 8 * 64, 512, INIT, rng),
                fc2: Linear::new(&format!("{name}.fc2"), 512, 512, INIT, rng),
            },
        }
    }

    pub fn stem(&self) -> &SharedStem<T> {
        match self {
            StructureEncoder::Residual18 { stem, .. } => stem,
            StructureEncoder::SmallConv { stem, .. } => stem,
        }
    }

    pub fn backbone(&self) -> Backbone {
        match self {
            StructureEncoder::Residual18 { .. } => Backbone::Residual18,
            StructureEncoder::SmallConv { .. } => Backbone::SmallConv,
        }
    }

    /// Encodes images into the structure code (spatial map + pooled vector).
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> StructureCode {
        let map = match self {
            StructureEncoder::Residual18 { stem, body } => {
                let h = stem.forward(g, x);
                let h = g.max_pool2d(h, 3, 2, 1, false);
                body.forward(g, h)
            }
            StructureEncoder::SmallConv { stem, conv2, bn2, fc1, fc2 } => {
                let h = stem.forward(g, x);
                let h = g.max_pool2d(h, 2, 2, 0, false);
                let h = conv2.forward(g, h);
                let h = bn2.forward(g, h);
                let h = g.relu(h);
                let h = g.max_pool2d(h, 2, 2, 0, false);
                let shape = g.value(h).shape().to_vec();
                let flat = shape[1] * shape[2] * shape[3];
                assert_eq!(
                    flat,
                    fc1.w.shape()[0],
                    "small-conv backbone expects 32×32 inputs, got {}×{}",
                    shape[1] * 4,
                    shape[2] * 4
                );
                let h = g.reshape(h, &[shape[0], flat]);
                let h = fc1.forward(g, h);
                let h = g.relu(h);
                let h = fc2.forward(g, h);
                let h = g.relu(h);
                // The structure "map" of the dense variant is 1×1 spatial.
                g.reshape(h, &[shape[0], 1, 1, 512])
            }
        };
        let pooled4 = g.global_avg_pool(map);
        let s = g.value(pooled4).shape().to_vec();
        let pooled = g.reshape(pooled4, &[s[0], s[3]]);
        StructureCode { map, pooled }
    }
}

impl<T: Element> HasParams<T> for StructureEncoder<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        match self {
            StructureEncoder::Residual18 { stem, body } => {
                stem.collect_params(out);
                body.collect_params(out);
            }
            StructureEncoder::SmallConv { stem, conv2, bn2, fc1, fc2 } => {
                stem.collect_params(out);
                conv2.collect_params(out);
                bn2.collect_params(out);
                fc1.collect_params(out);
                fc2.collect_params(out);
            }
        }
    }
}

/// Domain-private texture encoder E_n producing an 8-dimensional code.
///
/// At full scale this is the published topology: the shared stem
/// (7×7/2, 64), a second 7×7/2×64 block, one 3×3/2×128 block, three
/// 3×3/2×256 blocks, global average pooling, and a 1×1 conv to 8 channels.
/// The small variant mirrors it above the small-conv stem.
pub struct TextureEncoder<T> {
    stem: SharedStem<T>,
    pool_after_stem: bool,
    blocks: Vec<(Conv2d<T>, BatchNorm2d<T>)>,
    head: Conv2d<T>,
}

impl<T: Element> TextureEncoder<T> {
    pub fn new(
        name: &str,
        backbone: Backbone,
        stem: SharedStem<T>,
        width_scale: f64,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        // (kernel, width, stride, pad) per block after the stem.
        let plan: Vec<(usize, usize, usize, usize)> = match backbone {
            Backbone::Residual18 => vec![
                (7, scaled(64, width_scale), 2, 3),
                (3, scaled(128, width_scale), 2, 1),
                (3, scaled(256, width_scale), 2, 1),
                (3, scaled(256, width_scale), 2, 1),
                (3, scaled(256, width_scale), 2, 1),
            ],
            Backbone::SmallConv => vec![
                (3, scaled(64, width_scale), 2, 1),
                (3, scaled(128, width_scale), 2, 1),
                (3, scaled(256, width_scale), 2, 1),
            ],
        };
        let mut blocks = Vec::with_capacity(plan.len());
        let mut cin = stem.width;
        for (i, (k, w, s, p)) in plan.into_iter().enumerate() {
            blocks.push((
                Conv2d::new(&format!("{name}.b{i}"), k, cin, w, s, p, false, INIT, rng),
                BatchNorm2d::new(&format!("{name}.b{i}_bn"), w),
            ));
            cin = w;
        }
        Self {
            stem,
            pool_after_stem: backbone == Backbone::SmallConv,
            blocks,
            head: Conv2d::new(&format!("{name}.head"), 1, cin, 8, 1, 0, true, INIT, rng),
        }
    }

    /// Encodes images into the (batch, 8) texture code.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let mut h = self.stem.forward(g, x);
        if self.pool_after_stem {
            h = g.max_pool2d(h, 2, 2, 0, false);
        }
        for (conv, bn) in &self.blocks {
            h = conv.forward(g, h);
            h = bn.forward(g, h);
            h = g.relu(h);
        }
        let h = g.global_avg_pool(h);
        let h = self.head.forward(g, h);
        let b = g.value(h).shape()[0];
        g.reshape(h, &[b, 8])
    }
}

impl<T: Element> HasParams<T> for TextureEncoder<T> {
    /// Deliberately excludes the aliased stem: those parameters belong to the
    /// structure encoder's set (Algorithm 1 keeps the partition disjoint).
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        for (conv, bn) in &self.blocks {
            conv.collect_params(out);
            bn.collect_params(out);
        }
        self.head.collect_params(out);
    }
}
