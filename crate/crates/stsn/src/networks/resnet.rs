//! 18-layer residual body (stages after the shared stem).

use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Param, Var};
use crate::layers::{BatchNorm2d, Conv2d, HasParams, WeightInit};
use crate::tensor::Element;

const INIT: WeightInit = WeightInit::Normal { std: 0.02 };

/// Two 3×3 convolutions with a skip connection; the first may downsample.
pub struct BasicBlock<T> {
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    conv2: Conv2d<T>,
    bn2: BatchNorm2d<T>,
    down: Option<(Conv2d<T>, BatchNorm2d<T>)>,
}

impl<T: Element> BasicBlock<T> {
    fn new(name: &str, cin: usize, cout: usize, stride: usize, rng: &mut ChaCha12Rng) -> Self {
        let down = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(&format!("{name}.down"), 1, cin, cout, stride, 0, false, INIT, rng),
                BatchNorm2d::new(&format!("{name}.down_bn"), cout),
            )
        });
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), 3, cin, cout, stride, 1, false, INIT, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), cout),
            conv2: Conv2d::new(&format!("{name}.conv2"), 3, cout, cout, 1, 1, false, INIT, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), cout),
            down,
        }
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let skip = match &self.down {
            Some((conv, bn)) => {
                let d = conv.forward(g, x);
                bn.forward(g, d)
            }
            None => x,
        };
        let h = self.conv1.forward(g, x);
        let h = self.bn1.forward(g, h);
        let h = g.relu(h);
        let h = self.conv2.forward(g, h);
        let h = self.bn2.forward(g, h);
        let h = g.add(h, skip);
        g.relu(h)
    }
}

impl<T: Element> HasParams<T> for BasicBlock<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        self.conv1.collect_params(out);
        self.bn1.collect_params(out);
        self.conv2.collect_params(out);
        self.bn2.collect_params(out);
        if let Some((conv, bn)) = &self.down {
            conv.collect_params(out);
            bn.collect_params(out);
        }
    }
}

/// The four residual stages (widths 64→512); input is the pooled stem output.
pub struct ResNetBody<T> {
    blocks: Vec<BasicBlock<T>>,
}

impl<T: Element> ResNetBody<T> {
    pub fn new(name: &str, rng: &mut ChaCha12Rng) -> Self {
        let mut blocks = Vec::with_capacity(8);
        let mut cin = 64;
        for (stage, &width) in [64usize, 128, 256, 512].iter().enumerate() {
            for i in 0..2 {
                let stride = if stage > 0 && i == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(
                    &format!("{name}.s{}b{i}", stage + 1),
                    cin,
                    width,
                    stride,
                    rng,
                ));
                cin = width;
            }
        }
        Self { blocks }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(g, h);
        }
        h
    }
}

impl<T: Element> HasParams<T> for ResNetBody<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        for b in &self.blocks {
            b.collect_params(out);
        }
    }
}
