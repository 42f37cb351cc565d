//! Generator decoding an assembled latent (structure ⊕ texture ⊕ domain)
//! back into an image in [-1, 1].

use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Param, Var};
use crate::layers::{Conv2d, ConvT2d, HasParams, InstanceNorm2d, LayerNormC, WeightInit};
use crate::tensor::Element;

use super::scaled;

const INIT: WeightInit = WeightInit::Normal { std: 0.02 };

/// One ×2 upsampling group: transposed conv (instance-normed) followed by a
/// stride-1 refinement conv (layer-normed over channels).
struct UpGroup<T> {
    deconv: ConvT2d<T>,
    inorm: InstanceNorm2d<T>,
    conv: Conv2d<T>,
    lnorm: LayerNormC<T>,
}

impl<T: Element> UpGroup<T> {
    fn new(name: &str, cin: usize, deconv_w: usize, conv_w: usize, rng: &mut ChaCha12Rng) -> Self {
        Self {
            deconv: ConvT2d::new(&format!("{name}.deconv"), 4, cin, deconv_w, 2, 1, false, INIT, rng),
            inorm: InstanceNorm2d::new(),
            conv: Conv2d::new(&format!("{name}.conv"), 3, deconv_w, conv_w, 1, 1, false, INIT, rng),
            lnorm: LayerNormC::new(&format!("{name}.ln"), conv_w),
        }
    }

    fn forward(&self, g: &mut Graph<T>, x: Var) -> Var {
        let h = self.deconv.forward(g, x);
        let h = self.inorm.forward(g, h);
        let h = g.relu(h);
        let h = self.conv.forward(g, h);
        let h = self.lnorm.forward(g, h);
        g.relu(h)
    }
}

impl<T: Element> HasParams<T> for UpGroup<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        self.deconv.collect_params(out);
        self.conv.collect_params(out);
        self.lnorm.collect_params(out);
    }
}

/// Image generator G: five ×2 upsampling groups and a 1×1 head with tanh,
/// so a latent of side s decodes to a 32·s image.
pub struct Generator<T> {
    groups: Vec<UpGroup<T>>,
    head: Conv2d<T>,
}

impl<T: Element> Generator<T> {
    pub fn new(name: &str, latent_c: usize, width_scale: f64, rng: &mut ChaCha12Rng) -> Self {
        let deconv_w = [256, 128, 64, 32, 32].map(|w| scaled(w, width_scale));
        let conv_w = [128, 64, 32, 32, 32].map(|w| scaled(w, width_scale));
        let mut groups = Vec::with_capacity(5);
        let mut cin = latent_c;
        for i in 0..5 {
            groups.push(UpGroup::new(&format!("{name}.up{i}"), cin, deconv_w[i], conv_w[i], rng));
            cin = conv_w[i];
        }
        Self {
            groups,
            head: Conv2d::new(&format!("{name}.head"), 1, cin, 3, 1, 0, true, INIT, rng),
        }
    }

    /// Decodes an assembled latent (b, s, s, c_g+10) into a (b, 32s, 32s, 3)
    /// image with values in (-1, 1).
    pub fn forward(&self, g: &mut Graph<T>, z: Var) -> Var {
        let mut h = z;
        for group in &self.groups {
            h = group.forward(g, h);
        }
        let h = self.head.forward(g, h);
        g.tanh(h)
    }
}

impl<T: Element> HasParams<T> for Generator<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        for group in &self.groups {
            group.collect_params(out);
        }
        self.head.collect_params(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn rand_input(shape: &[usize], seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        WeightInit::Normal { std: 1.0 }.sample(shape, 1, &mut rng)
    }

    #[test]
    fn latent_side_times_32_and_range_is_open_unit() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let gen: Generator<f32> = Generator::new("g", 522, 0.25, &mut rng);
        let mut g = Graph::new(false);
        let z = g.constant(rand_input(&[2, 1, 1, 522], 7));
        let y = gen.forward(&mut g, z);
        assert_eq!(g.value(y).shape(), &[2, 32, 32, 3]);
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn seven_by_seven_latent_decodes_to_224() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let gen: Generator<f32> = Generator::new("g", 522, 0.125, &mut rng);
        let mut g = Graph::new(false);
        let z = g.constant(rand_input(&[1, 7, 7, 522], 8));
        let y = gen.forward(&mut g, z);
        assert_eq!(g.value(y).shape(), &[1, 224, 224, 3]);
    }

    #[test]
    fn construction_is_seed_deterministic() {
        let build = || {
            let mut rng = ChaCha12Rng::seed_from_u64(5);
            let g: Generator<f32> = Generator::new("g", 20, 0.1, &mut rng);
            g.params().iter().map(|p| p.value().data().to_vec()).collect::<Vec<_>>()
        };
        assert_eq!(build(), build());
    }
}
