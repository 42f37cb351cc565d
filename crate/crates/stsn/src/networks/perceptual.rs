//! Frozen perceptual extractor Φ: a 16-layer-style conv stack truncated
//! after conv5_1, exposing five named post-ReLU taps.

use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Param, Var};
use crate::layers::{Conv2d, HasParams, WeightInit};
use crate::tensor::Element;

use super::scaled;

/// Tap names in network depth order; `relu{i}_1` follows stage i's first conv.
pub const TAP_NAMES: [&str; 5] = ["relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"];

/// Frozen feature extractor. Parameters are buffers: they are never trained
/// and never checkpointed with the model, but gradients still flow *through*
/// the activations back to the input images.
pub struct PerceptualExtractor<T> {
    stages: Vec<Vec<Conv2d<T>>>,
}

impl<T: Element> PerceptualExtractor<T> {
    /// Builds the extractor with weights drawn once from a seeded He-scaled
    /// normal and frozen. He scaling keeps activations alive through eleven
    /// untrained layers where a flat 0.02 init would collapse them to zero.
    pub fn fixed_random(name: &str, width_scale: f64, rng: &mut ChaCha12Rng) -> Self {
        let plan: [&[usize]; 5] = [
            &[64, 64],
            &[128, 128],
            &[256, 256, 256],
            &[512, 512, 512],
            &[512],
        ];
        let mut stages = Vec::with_capacity(5);
        let mut cin = 3;
        for (s, widths) in plan.into_iter().enumerate() {
            let mut convs = Vec::with_capacity(widths.len());
            for (i, &w) in widths.iter().enumerate() {
                let w = scaled(w, width_scale);
                let conv = Conv2d::new(
                    &format!("{name}.conv{}_{}", s + 1, i + 1),
                    3,
                    cin,
                    w,
                    1,
                    1,
                    true,
                    WeightInit::HeNormal,
                    rng,
                );
                convs.push(freeze(conv));
                cin = w;
            }
            stages.push(convs);
        }
        Self { stages }
    }

    /// Runs the stack as deep as the deepest requested tap and returns the
    /// requested (name, activation) pairs in depth order.
    pub fn taps(&self, g: &mut Graph<T>, x: Var, names: &[&str]) -> Vec<(String, Var)> {
        let depth = names
            .iter()
            .map(|n| {
                TAP_NAMES
                    .iter()
                    .position(|t| t == n)
                    .unwrap_or_else(|| panic!("unknown perceptual tap {n:?}"))
            })
            .max()
            .expect("at least one tap must be requested");

        let mut out = Vec::new();
        let mut h = x;
        for (s, convs) in self.stages.iter().take(depth + 1).enumerate() {
            if s > 0 {
                // Ceil-mode pooling keeps the deepest taps reachable even on
                // the tiny inputs the gradient checks use.
                h = g.max_pool2d(h, 2, 2, 0, true);
            }
            for (i, conv) in convs.iter().enumerate() {
                h = conv.forward(g, h);
                h = g.relu(h);
                if i == 0 && names.contains(&TAP_NAMES[s]) {
                    out.push((TAP_NAMES[s].to_string(), h));
                }
            }
        }
        out
    }
}

/// Rebuilds a conv layer's parameters as frozen buffers.
fn freeze<T: Element>(conv: Conv2d<T>) -> Conv2d<T> {
    Conv2d {
        w: Param::buffer(conv.w.name(), conv.w.value()),
        b: conv.b.map(|b| Param::buffer(b.name(), b.value())),
        stride: conv.stride,
        pad: conv.pad,
    }
}

impl<T: Element> HasParams<T> for PerceptualExtractor<T> {
    fn collect_params(&self, out: &mut Vec<Param<T>>) {
        for convs in &self.stages {
            for conv in convs {
                conv.collect_params(out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    #[test]
    fn tap_spatial_schedule_halves_per_stage() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let phi: PerceptualExtractor<f32> = PerceptualExtractor::fixed_random("phi", 0.0625, &mut rng);
        let mut g = Graph::new(false);
        let x = g.constant(Tensor::zeros(&[1, 224, 224, 3]));
        let names: Vec<&str> = TAP_NAMES.to_vec();
        let taps = phi.taps(&mut g, x, &names);
        let sides: Vec<usize> = taps.iter().map(|(_, v)| g.value(*v).shape()[1]).collect();
        assert_eq!(sides, [224, 112, 56, 28, 14]);
    }

    #[test]
    fn deepest_tap_survives_an_eight_pixel_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let phi: PerceptualExtractor<f64> = PerceptualExtractor::fixed_random("phi", 0.125, &mut rng);
        let mut g = Graph::new(false);
        let x = g.constant(Tensor::full(&[2, 8, 8, 3], 0.5));
        let taps = phi.taps(&mut g, x, &["relu5_1"]);
        assert_eq!(taps.len(), 1);
        // 8 → 4 → 2 → 1 → 1 under ceil pooling.
        assert_eq!(g.value(taps[0].1).shape()[1], 1);
    }

    #[test]
    fn shallow_requests_do_not_run_deep_stages() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let phi: PerceptualExtractor<f32> = PerceptualExtractor::fixed_random("phi", 0.0625, &mut rng);
        let mut g = Graph::new(false);
        let x = g.constant(Tensor::zeros(&[1, 32, 32, 3]));
        let before = g.len();
        let _ = phi.taps(&mut g, x, &["relu1_1"]);
        let shallow = g.len() - before;
        let _ = phi.taps(&mut g, x, &["relu5_1"]);
        let deep = g.len() - before - shallow;
        assert!(shallow < deep / 2, "relu1_1 alone should stop after stage one");
    }

    #[test]
    fn activations_stay_alive_through_the_stack() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let phi: PerceptualExtractor<f64> = PerceptualExtractor::fixed_random("phi", 0.25, &mut rng);
        let mut xr = ChaCha12Rng::seed_from_u64(4);
        let x = WeightInit::Normal { std: 0.5 }.sample(&[1, 32, 32, 3], 1, &mut xr);
        let mut g = Graph::new(false);
        let xv = g.constant(x);
        let taps = phi.taps(&mut g, xv, &["relu5_1"]);
        let v = g.value(taps[0].1);
        let mean_abs: f64 = v.data().iter().map(|a| a.abs()).sum::<f64>() / v.len() as f64;
        assert!(mean_abs > 1e-3, "deep activations collapsed: mean |a| = {mean_abs}");
    }

    #[test]
    fn all_parameters_are_frozen_buffers() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let phi: PerceptualExtractor<f32> = PerceptualExtractor::fixed_random("phi", 0.0625, &mut rng);
        let params = phi.params();
        assert_eq!(params.len(), 2 * 11, "eleven convs, weight + bias each");
        assert!(params.iter().all(|p| !p.trainable()));
    }
}
