//! Every training objective: classification on source and transformed
//! images, the feature-level adversarial pair, the least-squares image
//! adversarial pair, perceptual structure/texture matching, reconstruction,
//! and the weighted total.

use rand_chacha::ChaCha12Rng;

use crate::config::{AblationFlags, LossWeights, PerceptualSpec};
use crate::graph::{Graph, Var};
use crate::networks::{
    Classifier, FeatureDiscriminator, ImageDiscriminator, PerceptualExtractor, StructureEncoder,
};
use crate::tensor::Element;

/// Log arguments are clamped here so saturated discriminators yield finite
/// losses instead of infinities.
pub const LOG_CLAMP: f64 = 1e-7;

/// Mean over the batch of −log softmax(logits)[label].
pub fn cross_entropy<T: Element>(g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Var {
    let shape = g.value(logits).shape().to_vec();
    assert_eq!(shape.len(), 2, "logits must be (batch, classes)");
    assert_eq!(shape[0], labels.len(), "one label per row");
    for &y in labels {
        assert!(y < shape[1], "label {y} out of range for {} classes", shape[1]);
    }
    g.softmax_cross_entropy(logits, labels)
}

/// Supervised source classification: CE(C(pool(E_g(x_s))), y_s).
pub fn cls_source<T: Element>(
    g: &mut Graph<T>,
    e_g: &StructureEncoder<T>,
    c: &Classifier<T>,
    x_s: Var,
    y_s: &[usize],
) -> Var {
    let code = e_g.forward(g, x_s);
    let logits = c.forward(g, code.pooled);
    cross_entropy(g, logits, y_s)
}

/// Classification of the target-like transform under the *source* labels:
/// CE(C(pool(E_g(x_st))), y_s). `x_st` must be the generator output on the
/// same tape, so the gradient reaches C, E_g, G, and both texture encoders.
pub fn cls_transformed<T: Element>(
    g: &mut Graph<T>,
    e_g: &StructureEncoder<T>,
    c: &Classifier<T>,
    x_st: Var,
    y_s: &[usize],
) -> Var {
    cls_source(g, e_g, c, x_st, y_s)
}

fn mean_log_clamped<T: Element>(g: &mut Graph<T>, p: Var) -> Var {
    let lo = T::from_f64(LOG_CLAMP);
    let hi = T::from_f64(1.0 - LOG_CLAMP);
    let p = g.clamp(p, lo, hi);
    let l = g.log(p);
    g.mean_all(l)
}

fn one_minus<T: Element>(g: &mut Graph<T>, p: Var) -> Var {
    let n = g.neg(p);
    g.add_scalar(n, T::ONE)
}

/// Feature-discriminator objective E[log D_F(f_t)] + E[log(1−D_F(f_s))],
/// a log-likelihood ≤ 0 that the discriminator step *maximizes* (the trainer
/// minimizes its negation). Codes must be detached for that step.
pub fn adv_f_discriminator<T: Element>(
    g: &mut Graph<T>,
    d_f: &FeatureDiscriminator<T>,
    f_s: Var,
    f_t: Var,
    rng: &mut ChaCha12Rng,
) -> Var {
    let p_t = d_f.forward(g, f_t, rng);
    let p_s = d_f.forward(g, f_s, rng);
    let a = mean_log_clamped(g, p_t);
    let inv = one_minus(g, p_s);
    let b = mean_log_clamped(g, inv);
    g.add(a, b)
}

/// Encoder-side feature-adversarial loss with inverted domain labels:
/// −E[log D_F(f_s)] − E[log(1−D_F(f_t))] ≥ 0, minimized when E_g makes
/// source codes look like target codes (and vice versa).
pub fn adv_f_encoder<T: Element>(
    g: &mut Graph<T>,
    d_f: &FeatureDiscriminator<T>,
    f_s: Var,
    f_t: Var,
    rng: &mut ChaCha12Rng,
) -> Var {
    let p_s = d_f.forward(g, f_s, rng);
    let p_t = d_f.forward(g, f_t, rng);
    let a = mean_log_clamped(g, p_s);
    let inv = one_minus(g, p_t);
    let b = mean_log_clamped(g, inv);
    let sum = g.add(a, b);
    g.neg(sum)
}

/// Least-squares image-discriminator loss:
/// ½·mean[(D_I(real)−1)²] + ½·mean[D_I(fake)²]. Fakes must be detached.
pub fn adv_i_discriminator<T: Element>(
    g: &mut Graph<T>,
    d_i: &ImageDiscriminator<T>,
    real: Var,
    fake: Var,
) -> Var {
    let half = T::from_f64(0.5);
    let s_real = d_i.forward(g, real);
    let s_fake = d_i.forward(g, fake);
    let r1 = g.add_scalar(s_real, -T::ONE);
    let r2 = g.square(r1);
    let r = g.mean_all(r2);
    let f2 = g.square(s_fake);
    let f = g.mean_all(f2);
    let rh = g.scale(r, half);
    let fh = g.scale(f, half);
    g.add(rh, fh)
}

/// Least-squares generator-side loss ½·mean[(D_I(fake)−1)²]; the gradient
/// reaches G and the encoders that produced the codes behind `fake`.
pub fn adv_i_generator<T: Element>(
    g: &mut Graph<T>,
    d_i: &ImageDiscriminator<T>,
    fake: Var,
) -> Var {
    let half = T::from_f64(0.5);
    let s = d_i.forward(g, fake);
    let d = g.add_scalar(s, -T::ONE);
    let d2 = g.square(d);
    let m = g.mean_all(d2);
    g.scale(m, half)
}

/// Spatial mean per channel: (b,h,w,c) → (b,c). Invariant to any spatial
/// permutation, which is what makes the texture terms structure-blind.
pub fn channel_mean<T: Element>(g: &mut Graph<T>, x: Var) -> Var {
    let shape = g.value(x).shape().to_vec();
    assert_eq!(shape.len(), 4, "channel_mean expects a feature map");
    let p = g.global_avg_pool(x);
    g.reshape(p, &[shape[0], shape[3]])
}

fn lookup(taps: &[(String, Var)], name: &str) -> Var {
    taps.iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("tap {name:?} missing from feature list"))
        .1
}

/// Σ_l λ_l · ‖φ_l(x) − φ_l(y)‖₁ over raw activations (element-mean L1):
/// the structure-matching form, sensitive to spatial layout.
pub fn structure_match<T: Element>(
    g: &mut Graph<T>,
    taps_x: &[(String, Var)],
    taps_y: &[(String, Var)],
    weights: &[(String, f64)],
) -> Var {
    let mut total = g.constant(crate::tensor::Tensor::scalar_tensor(T::ZERO));
    for (name, lambda) in weights {
        let a = lookup(taps_x, name);
        let b = lookup(taps_y, name);
        let d = g.l1_mean(a, b);
        let w = g.scale(d, T::from_f64(*lambda));
        total = g.add(total, w);
    }
    total
}

/// Σ_l λ_l · ‖U(φ_l(x)) − U(φ_l(y))‖₁ over channel means: the
/// texture-matching form, invariant to spatial permutations.
pub fn texture_match<T: Element>(
    g: &mut Graph<T>,
    taps_x: &[(String, Var)],
    taps_y: &[(String, Var)],
    weights: &[(String, f64)],
) -> Var {
    let mut total = g.constant(crate::tensor::Tensor::scalar_tensor(T::ZERO));
    for (name, lambda) in weights {
        let a = lookup(taps_x, name);
        let b = lookup(taps_y, name);
        let ua = channel_mean(g, a);
        let ub = channel_mean(g, b);
        let d = g.l1_mean(ua, ub);
        let w = g.scale(d, T::from_f64(*lambda));
        total = g.add(total, w);
    }
    total
}

fn tap_names(spec: &PerceptualSpec) -> Vec<&str> {
    // The reconstruction set is validated to be the texture/structure union,
    // so it covers every tap any term needs.
    spec.reconstruction_taps.iter().map(|(n, _)| n.as_str()).collect()
}

/// Perceptual loss of the transforms: structure terms match x_st to x_s and
/// x_ts to x_t on raw deep activations; texture terms match x_st to x_t and
/// x_ts to x_s on shallow channel means.
pub fn perceptual_loss<T: Element>(
    g: &mut Graph<T>,
    phi: &PerceptualExtractor<T>,
    spec: &PerceptualSpec,
    x_s: Var,
    x_t: Var,
    x_st: Var,
    x_ts: Var,
) -> Var {
    let names = tap_names(spec);
    let t_s = phi.taps(g, x_s, &names);
    let t_t = phi.taps(g, x_t, &names);
    let t_st = phi.taps(g, x_st, &names);
    let t_ts = phi.taps(g, x_ts, &names);

    let s1 = structure_match(g, &t_s, &t_st, &spec.structure_taps);
    let s2 = structure_match(g, &t_t, &t_ts, &spec.structure_taps);
    let x1 = texture_match(g, &t_t, &t_st, &spec.texture_taps);
    let x2 = texture_match(g, &t_s, &t_ts, &spec.texture_taps);
    let a = g.add(s1, s2);
    let b = g.add(x1, x2);
    g.add(a, b)
}

/// Reconstruction loss: raw-activation matching of x_ss to x_s and x_tt to
/// x_t over the union tap set.
pub fn reconstruction_loss<T: Element>(
    g: &mut Graph<T>,
    phi: &PerceptualExtractor<T>,
    spec: &PerceptualSpec,
    x_s: Var,
    x_t: Var,
    x_ss: Var,
    x_tt: Var,
) -> Var {
    let names = tap_names(spec);
    let t_s = phi.taps(g, x_s, &names);
    let t_t = phi.taps(g, x_t, &names);
    let t_ss = phi.taps(g, x_ss, &names);
    let t_tt = phi.taps(g, x_tt, &names);

    let a = structure_match(g, &t_s, &t_ss, &spec.reconstruction_taps);
    let b = structure_match(g, &t_t, &t_tt, &spec.reconstruction_taps);
    g.add(a, b)
}

/// Perceptual and reconstruction losses together, extracting each image's
/// feature taps exactly once (they share four of the six tap pyramids).
#[allow(clippy::too_many_arguments)]
pub fn perceptual_and_reconstruction<T: Element>(
    g: &mut Graph<T>,
    phi: &PerceptualExtractor<T>,
    spec: &PerceptualSpec,
    x_s: Var,
    x_t: Var,
    x_ss: Var,
    x_tt: Var,
    x_st: Var,
    x_ts: Var,
    use_per: bool,
    use_rec: bool,
) -> (Option<Var>, Option<Var>) {
    if !use_per && !use_rec {
        return (None, None);
    }
    let names = tap_names(spec);
    let t_s = phi.taps(g, x_s, &names);
    let t_t = phi.taps(g, x_t, &names);

    let per = use_per.then(|| {
        let t_st = phi.taps(g, x_st, &names);
        let t_ts = phi.taps(g, x_ts, &names);
        let s1 = structure_match(g, &t_s, &t_st, &spec.structure_taps);
        let s2 = structure_match(g, &t_t, &t_ts, &spec.structure_taps);
        let x1 = texture_match(g, &t_t, &t_st, &spec.texture_taps);
        let x2 = texture_match(g, &t_s, &t_ts, &spec.texture_taps);
        let a = g.add(s1, s2);
        let b = g.add(x1, x2);
        g.add(a, b)
    });
    let rec = use_rec.then(|| {
        let t_ss = phi.taps(g, x_ss, &names);
        let t_tt = phi.taps(g, x_tt, &names);
        let a = structure_match(g, &t_s, &t_ss, &spec.reconstruction_taps);
        let b = structure_match(g, &t_t, &t_tt, &spec.reconstruction_taps);
        g.add(a, b)
    });
    (per, rec)
}

/// Per-term scalar values of one iteration (disabled terms stay 0).
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub cls_s: f64,
    pub cls_st: f64,
    /// Feature-discriminator objective (a log-likelihood, ≤ 0).
    pub adv_f_d: f64,
    /// Encoder-side feature-adversarial loss (≥ 0).
    pub adv_f_e: f64,
    pub adv_i_d: f64,
    pub adv_i_g: f64,
    pub per: f64,
    pub rec: f64,
    pub total: f64,
}

impl LossReport {
    /// Column labels for the metrics CSV, in field order.
    pub const CSV_COLUMNS: [&'static str; 9] =
        ["cls_s", "cls_st", "adv_f_d", "adv_f_e", "adv_i_d", "adv_i_g", "per", "rec", "total"];

    pub fn csv_values(&self) -> [f64; 9] {
        [
            self.cls_s, self.cls_st, self.adv_f_d, self.adv_f_e, self.adv_i_d, self.adv_i_g,
            self.per, self.rec, self.total,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.csv_values().iter().all(|v| v.is_finite())
    }

    /// Name of the first non-finite term, for abort diagnostics.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        Self::CSV_COLUMNS
            .iter()
            .zip(self.csv_values())
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| *n)
    }
}

/// Fills `total` from the per-term values: cls_s + cls_st + α₁·adv_f_e +
/// α₂·adv_i_g + α₃·per + α₄·rec, with disabled terms contributing exactly 0.
pub fn total_loss(mut report: LossReport, w: &LossWeights, flags: &AblationFlags) -> LossReport {
    let mut total = report.cls_s;
    if flags.use_cls_st {
        total += report.cls_st;
    }
    if flags.use_adv_f {
        total += w.alpha1 * report.adv_f_e;
    }
    if flags.use_adv_i {
        total += w.alpha2 * report.adv_i_g;
    }
    if flags.use_per {
        total += w.alpha3 * report.per;
    }
    if flags.use_rec {
        total += w.alpha4 * report.rec;
    }
    report.total = total;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Param;
    use crate::layers::{HasParams, WeightInit};
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    fn zeroed<T: Element, N: HasParams<T>>(net: &N) {
        for p in net.params() {
            p.set_value(Tensor::zeros(&p.shape()));
        }
    }

    #[test]
    fn uniform_logits_cost_ln_k_and_confident_correct_cost_zero() {
        let mut g: Graph<f64> = Graph::new(false);
        let z = g.constant(Tensor::zeros(&[4, 10]));
        let ce = cross_entropy(&mut g, z, &[0, 3, 7, 9]);
        assert!((g.value(ce).scalar() - 10.0f64.ln()).abs() < 1e-12);

        let mut hot = Tensor::zeros(&[1, 5]);
        hot.data_mut()[2] = 1e6;
        let zv = g.constant(hot);
        let ce2 = cross_entropy(&mut g, zv, &[2]);
        assert!(g.value(ce2).scalar().abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_label_is_rejected() {
        let mut g: Graph<f64> = Graph::new(false);
        let z = g.constant(Tensor::zeros(&[1, 3]));
        let _ = cross_entropy(&mut g, z, &[3]);
    }

    #[test]
    fn feature_adversarial_closed_forms_at_one_half() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let d_f: FeatureDiscriminator<f64> = FeatureDiscriminator::new("d_f", 6, &mut rng);
        zeroed(&d_f); // all-zero weights → logits 0 → sigmoid exactly 0.5
        let mut g = Graph::new(false);
        let f_s = g.constant(Tensor::full(&[3, 6], 0.7));
        let f_t = g.constant(Tensor::full(&[3, 6], -0.2));
        let mut r1 = ChaCha12Rng::seed_from_u64(1);
        let obj = adv_f_discriminator(&mut g, &d_f, f_s, f_t, &mut r1);
        assert!((g.value(obj).scalar() - (0.5f64.ln() * 2.0)).abs() < 1e-9, "log½+log½");
        let mut r2 = ChaCha12Rng::seed_from_u64(2);
        let enc = adv_f_encoder(&mut g, &d_f, f_s, f_t, &mut r2);
        assert!((g.value(enc).scalar() + 0.5f64.ln() * 2.0).abs() < 1e-9, "negated form");
    }

    #[test]
    fn saturated_discriminator_losses_stay_finite() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let d_f: FeatureDiscriminator<f64> = FeatureDiscriminator::new("d_f", 4, &mut rng);
        // Huge bias drives the sigmoid to 1 exactly in floating point.
        for p in d_f.params() {
            if p.name().ends_with("fc3.bias") {
                p.set_value(Tensor::full(&[1], 1e3));
            }
        }
        let mut g = Graph::new(false);
        let f = g.constant(Tensor::full(&[2, 4], 1.0));
        let mut r = ChaCha12Rng::seed_from_u64(4);
        let enc = adv_f_encoder(&mut g, &d_f, f, f, &mut r);
        let v = g.value(enc).scalar();
        assert!(v.is_finite(), "clamping must cap the loss, got {v}");
        assert!(v > 10.0, "saturation should still be expensive, got {v}");
    }

    #[test]
    fn lsgan_closed_forms_at_one_half() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let d: ImageDiscriminator<f64> = ImageDiscriminator::new("d", 8, 0.5, &mut rng);
        zeroed(&d);
        for p in d.params() {
            if p.name().ends_with("head.bias") {
                p.set_value(Tensor::full(&[1], 0.5)); // output ≡ 0.5 exactly
            }
        }
        let mut g = Graph::new(false);
        let real = g.constant(Tensor::full(&[2, 8, 8, 3], 0.3));
        let fake = g.constant(Tensor::full(&[2, 8, 8, 3], -0.6));
        let ld = adv_i_discriminator(&mut g, &d, real, fake);
        assert!((g.value(ld).scalar() - 0.25).abs() < 1e-12);
        let lg = adv_i_generator(&mut g, &d, fake);
        assert!((g.value(lg).scalar() - 0.125).abs() < 1e-12);

        // Perfect discrimination: D(real)=1, D(fake)=0 → discriminator loss 0.
        let one = g.constant(Tensor::full(&[2, 1], 1.0));
        let zero = g.constant(Tensor::full(&[2, 1], 0.0));
        let half = 0.5;
        let r1 = g.add_scalar(one, -1.0);
        let r2 = g.square(r1);
        let r = g.mean_all(r2);
        let f2 = g.square(zero);
        let fm = g.mean_all(f2);
        let rh = g.scale(r, half);
        let fh = g.scale(fm, half);
        let perfect = g.add(rh, fh);
        assert_eq!(g.value(perfect).scalar(), 0.0);
    }

    #[test]
    fn channel_mean_matches_hand_arithmetic_and_ignores_layout() {
        let mut g: Graph<f64> = Graph::new(false);
        let x = g.constant(Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]));
        let u = channel_mean(&mut g, x);
        assert_eq!(g.value(u).data(), &[2.5]);

        let p = g.constant(Tensor::from_vec(&[1, 2, 2, 1], vec![4.0, 1.0, 2.0, 3.0]));
        let up = channel_mean(&mut g, p);
        assert_eq!(g.value(up).data(), &[2.5], "spatial permutation is invisible");
    }

    fn fake_taps(g: &mut Graph<f64>, seed: u64) -> Vec<(String, Var)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        ["relu1_1", "relu4_1"]
            .iter()
            .map(|n| {
                let t = WeightInit::Normal { std: 1.0 }.sample(&[2, 3, 3, 4], 1, &mut rng);
                (n.to_string(), g.constant(t))
            })
            .collect()
    }

    #[test]
    fn identical_taps_zero_both_match_forms() {
        let mut g = Graph::new(false);
        let taps = fake_taps(&mut g, 7);
        let w = vec![("relu1_1".to_string(), 0.5), ("relu4_1".to_string(), 1.0)];
        let s = structure_match(&mut g, &taps, &taps, &w);
        let t = texture_match(&mut g, &taps, &taps, &w);
        assert_eq!(g.value(s).scalar(), 0.0);
        assert_eq!(g.value(t).scalar(), 0.0);
    }

    #[test]
    fn doubling_weights_doubles_the_match_losses() {
        let mut g = Graph::new(false);
        let a = fake_taps(&mut g, 8);
        let b = fake_taps(&mut g, 9);
        let w1 = vec![("relu1_1".to_string(), 0.25), ("relu4_1".to_string(), 1.0)];
        let w2: Vec<(String, f64)> = w1.iter().map(|(n, v)| (n.clone(), v * 2.0)).collect();
        let s1 = structure_match(&mut g, &a, &b, &w1);
        let s2 = structure_match(&mut g, &a, &b, &w2);
        assert!((g.value(s2).scalar() - 2.0 * g.value(s1).scalar()).abs() < 1e-12);
    }

    #[test]
    fn spatial_permutation_moves_structure_but_not_texture_terms() {
        let mut g: Graph<f64> = Graph::new(false);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let base: Tensor<f64> = WeightInit::Normal { std: 1.0 }.sample(&[1, 2, 2, 3], 1, &mut rng);
        // Swap the first two spatial positions (rows of length c=3).
        let mut permuted = base.data().to_vec();
        permuted.swap(0, 3);
        permuted.swap(1, 4);
        permuted.swap(2, 5);
        let o = g.constant(base.clone());
        let p = g.constant(Tensor::from_vec(&[1, 2, 2, 3], permuted));
        let other = {
            let t = WeightInit::Normal { std: 1.0 }.sample(&[1, 2, 2, 3], 1, &mut rng);
            g.constant(t)
        };
        let w = vec![("relu1_1".to_string(), 1.0)];
        let taps_o = vec![("relu1_1".to_string(), o)];
        let taps_p = vec![("relu1_1".to_string(), p)];
        let taps_r = vec![("relu1_1".to_string(), other)];

        let s_o = structure_match(&mut g, &taps_r, &taps_o, &w);
        let s_p = structure_match(&mut g, &taps_r, &taps_p, &w);
        assert!((g.value(s_o).scalar() - g.value(s_p).scalar()).abs() > 1e-6);

        let t_o = texture_match(&mut g, &taps_r, &taps_o, &w);
        let t_p = texture_match(&mut g, &taps_r, &taps_p, &w);
        assert!((g.value(t_o).scalar() - g.value(t_p).scalar()).abs() < 1e-12);
    }

    #[test]
    fn total_loss_arithmetic_and_ablation_zeroing() {
        let unit = LossReport {
            cls_s: 1.0,
            cls_st: 1.0,
            adv_f_d: -1.0,
            adv_f_e: 1.0,
            adv_i_d: 1.0,
            adv_i_g: 1.0,
            per: 1.0,
            rec: 1.0,
            total: 0.0,
        };
        let w = LossWeights::default();
        let all = AblationFlags::default();
        let full = total_loss(unit, &w, &all);
        assert!((full.total - 3.56).abs() < 1e-12, "1+1+1+0.01+0.05+0.5");

        let none = AblationFlags {
            use_adv_f: false,
            use_adv_i: false,
            use_rec: false,
            use_per: false,
            use_cls_st: false,
        };
        assert_eq!(total_loss(unit, &w, &none).total, 1.0, "source-only keeps cls_s");
    }

    #[test]
    fn total_loss_is_linear_in_each_alpha() {
        let report = LossReport {
            cls_s: 0.3,
            cls_st: 0.2,
            adv_f_e: 0.7,
            adv_i_g: 0.9,
            per: 1.3,
            rec: 2.1,
            ..Default::default()
        };
        let flags = AblationFlags::default();
        let at = |a3: f64| {
            let w = LossWeights { alpha3: a3, ..Default::default() };
            total_loss(report, &w, &flags).total
        };
        let slope1 = at(1.0) - at(0.0);
        let slope2 = (at(2.0) - at(0.0)) / 2.0;
        assert!((slope1 - slope2).abs() < 1e-12);
        assert!((slope1 - report.per).abs() < 1e-12);
    }

    #[test]
    fn report_names_first_non_finite_term() {
        let mut r = LossReport::default();
        assert!(r.is_finite());
        r.adv_i_g = f64::NAN;
        assert_eq!(r.first_non_finite(), Some("adv_i_g"));
    }

    #[test]
    fn gradients_reach_every_network_through_cls_transformed() {
        use crate::latent::{transform_quadruple};
        use crate::networks::{Backbone, NetworkSettings, Networks};

        let nets: Networks<f64> = Networks::build(&NetworkSettings {
            backbone: Backbone::SmallConv,
            image_size: 32,
            num_classes: 3,
            gan_width_scale: 0.125,
            phi_width_scale: 0.0625,
            seed: 42,
        });
        let mut g = Graph::new(true);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let xs = WeightInit::Normal { std: 0.5 }.sample(&[2, 32, 32, 3], 1, &mut rng);
        let xt = WeightInit::Normal { std: 0.5 }.sample(&[2, 32, 32, 3], 1, &mut rng);
        let x_s = g.constant(xs);
        let x_t = g.constant(xt);
        let q = transform_quadruple(&mut g, &nets, x_s, x_t);
        let loss = cls_transformed(&mut g, &nets.e_g, &nets.c, q.x_st, &[0, 2]);
        let grads = g.backward(loss);

        let touches = |params: Vec<Param<f64>>| params.iter().any(|p| grads.contains(p));
        assert!(touches(nets.params_c()), "classifier");
        assert!(touches(nets.params_e_g()), "structure encoder");
        assert!(touches(nets.params_g()), "generator");
        assert!(touches(nets.params_e_n_t()), "target texture encoder feeds z_st");
        assert!(!touches(nets.params_d_f()), "feature discriminator is uninvolved");
        assert!(!touches(nets.params_d_i_t()), "image discriminators are uninvolved");
    }
}
