//! Finite-difference validation of every loss term at f64.
//!
//! Each loss is differentiated with respect to its immediate tensor inputs
//! (images, codes, logits as leaf parameters) and the networks it runs
//! through (feature discriminator, image discriminator). Graphs are built in
//! eval mode so dropout and batch statistics cannot perturb the probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use stsn::config::{AblationFlags, LossWeights, PerceptualSpec};
use stsn::gradcheck::finite_diff_check;
use stsn::graph::{Graph, Param, Var};
use stsn::layers::HasParams;
use stsn::losses;
use stsn::networks::{FeatureDiscriminator, ImageDiscriminator, PerceptualExtractor};
use stsn::tensor::Tensor;

fn rand_param(name: &str, shape: &[usize], seed: u64) -> Param<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect();
    Param::new(name, Tensor::from_vec(shape, data))
}

/// Checks the analytic gradient of `build`'s scalar output for every listed
/// parameter with the acceptance tolerances (rel err ≤ 1e-4).
fn fd_loss_case(params: &[&Param<f64>], build: impl Fn(&mut Graph<f64>) -> Var) {
    let grads = {
        let mut g = Graph::new(false);
        let loss = build(&mut g);
        g.backward(loss)
    };
    let mut rng = ChaCha12Rng::seed_from_u64(0x10_55);
    let report = finite_diff_check(params, &grads, 1e-5, 4, &mut rng, || {
        let mut g = Graph::new(false);
        let loss = build(&mut g);
        g.value(loss).scalar()
    });
    report.assert_ok(1e-4);
}

#[test]
fn cross_entropy_gradient_wrt_logits() {
    let logits = rand_param("logits", &[4, 5], 11);
    fd_loss_case(&[&logits], |g| {
        let z = g.param(&logits);
        losses::cross_entropy(g, z, &[0, 2, 4, 1])
    });
}

#[test]
fn feature_adversarial_gradients_both_sides() {
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let d_f: FeatureDiscriminator<f64> = FeatureDiscriminator::new("d_f", 6, &mut rng);
    let f_s = rand_param("f_s", &[3, 6], 22);
    let f_t = rand_param("f_t", &[3, 6], 23);
    let d_params = d_f.params();
    let mut all: Vec<&Param<f64>> = vec![&f_s, &f_t];
    all.extend(d_params.iter());

    fd_loss_case(&all, |g| {
        let a = g.param(&f_s);
        let b = g.param(&f_t);
        let mut r = ChaCha12Rng::seed_from_u64(0);
        losses::adv_f_discriminator(g, &d_f, a, b, &mut r)
    });
    fd_loss_case(&all, |g| {
        let a = g.param(&f_s);
        let b = g.param(&f_t);
        let mut r = ChaCha12Rng::seed_from_u64(0);
        losses::adv_f_encoder(g, &d_f, a, b, &mut r)
    });
}

#[test]
fn image_adversarial_gradients_both_sides() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let d_i: ImageDiscriminator<f64> = ImageDiscriminator::new("d_i", 8, 0.25, &mut rng);
    let real = rand_param("real", &[2, 8, 8, 3], 32);
    let fake = rand_param("fake", &[2, 8, 8, 3], 33);
    let d_params = d_i.params();
    let mut all: Vec<&Param<f64>> = vec![&real, &fake];
    all.extend(d_params.iter());

    fd_loss_case(&all, |g| {
        let r = g.param(&real);
        let f = g.param(&fake);
        losses::adv_i_discriminator(g, &d_i, r, f)
    });
    fd_loss_case(&all, |g| {
        let f = g.param(&fake);
        losses::adv_i_generator(g, &d_i, f)
    });
}

#[test]
fn perceptual_and_reconstruction_gradients_wrt_images() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let phi: PerceptualExtractor<f64> = PerceptualExtractor::fixed_random("phi", 0.125, &mut rng);
    let spec = PerceptualSpec::default();
    let x_s = rand_param("x_s", &[2, 8, 8, 3], 42);
    let x_t = rand_param("x_t", &[2, 8, 8, 3], 43);
    let x_a = rand_param("x_a", &[2, 8, 8, 3], 44);
    let x_b = rand_param("x_b", &[2, 8, 8, 3], 45);
    let all = [&x_s, &x_t, &x_a, &x_b];

    fd_loss_case(&all, |g| {
        let s = g.param(&x_s);
        let t = g.param(&x_t);
        let st = g.param(&x_a);
        let ts = g.param(&x_b);
        losses::perceptual_loss(g, &phi, &spec, s, t, st, ts)
    });
    fd_loss_case(&all, |g| {
        let s = g.param(&x_s);
        let t = g.param(&x_t);
        let ss = g.param(&x_a);
        let tt = g.param(&x_b);
        losses::reconstruction_loss(g, &phi, &spec, s, t, ss, tt)
    });
}

#[test]
fn weighted_total_gradient_through_every_term() {
    let mut rng = ChaCha12Rng::seed_from_u64(51);
    let phi: PerceptualExtractor<f64> = PerceptualExtractor::fixed_random("phi", 0.125, &mut rng);
    let d_f: FeatureDiscriminator<f64> = FeatureDiscriminator::new("d_f", 4, &mut rng);
    let d_i: ImageDiscriminator<f64> = ImageDiscriminator::new("d_i", 8, 0.25, &mut rng);
    let spec = PerceptualSpec::default();
    let w = LossWeights::default();
    let flags = AblationFlags::default();

    let logits_s = rand_param("logits_s", &[2, 3], 52);
    let logits_st = rand_param("logits_st", &[2, 3], 53);
    let f_s = rand_param("f_s", &[2, 4], 54);
    let f_t = rand_param("f_t", &[2, 4], 55);
    let x_s = rand_param("x_s", &[2, 8, 8, 3], 56);
    let x_t = rand_param("x_t", &[2, 8, 8, 3], 57);
    let x_st = rand_param("x_st", &[2, 8, 8, 3], 58);
    let x_ts = rand_param("x_ts", &[2, 8, 8, 3], 59);
    let params =
        [&logits_s, &logits_st, &f_s, &f_t, &x_s, &x_t, &x_st, &x_ts];

    // The encoder-phase objective: cls_s + cls_st + α₁·advF_e + α₂·advI_g
    // + α₃·per + α₄·rec, with x_st doubling as the reconstruction pair to
    // keep the case small.
    fd_loss_case(&params, |g| {
        let zs = g.param(&logits_s);
        let zt = g.param(&logits_st);
        let fs = g.param(&f_s);
        let ft = g.param(&f_t);
        let s = g.param(&x_s);
        let t = g.param(&x_t);
        let st = g.param(&x_st);
        let ts = g.param(&x_ts);

        let cls_s = losses::cross_entropy(g, zs, &[0, 2]);
        let cls_st = losses::cross_entropy(g, zt, &[0, 2]);
        let mut r = ChaCha12Rng::seed_from_u64(0);
        let adv_f_e = losses::adv_f_encoder(g, &d_f, fs, ft, &mut r);
        let adv_i_g = losses::adv_i_generator(g, &d_i, st);
        let per = losses::perceptual_loss(g, &phi, &spec, s, t, st, ts);
        let rec = losses::reconstruction_loss(g, &phi, &spec, s, t, st, ts);

        assert!(flags.use_adv_f && flags.use_adv_i && flags.use_per && flags.use_rec);
        let a1 = g.scale(adv_f_e, w.alpha1);
        let a2 = g.scale(adv_i_g, w.alpha2);
        let a3 = g.scale(per, w.alpha3);
        let a4 = g.scale(rec, w.alpha4);
        let mut total = g.add(cls_s, cls_st);
        total = g.add(total, a1);
        total = g.add(total, a2);
        total = g.add(total, a3);
        g.add(total, a4)
    });
}
