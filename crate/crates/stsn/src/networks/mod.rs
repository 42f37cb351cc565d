//! The eight parametric networks plus the frozen perceptual extractor.
//!
//! - `E_g` (structure encoder, shared between domains),
//! - `E_n^s` / `E_n^t` (domain-private texture encoders, first conv block
//!   aliased with `E_g`'s stem),
//! - `G` (generator decoding structure + texture + domain code),
//! - `D_I^s` / `D_I^t` (per-domain image discriminators, raw scores),
//! - `D_F` (feature discriminator on pooled structure vectors),
//! - `C` (linear classifier on pooled structure vectors),
//! - `Φ` (frozen feature extractor providing the perceptual taps).

mod discriminators;
mod encoders;
mod generator;
mod perceptual;
mod resnet;

pub use discriminators::{Classifier, FeatureDiscriminator, ImageDiscriminator};
pub use encoders::{SharedStem, StructureEncoder, TextureEncoder};
pub use generator::Generator;
pub use perceptual::{PerceptualExtractor, TAP_NAMES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Param, Var};
use crate::layers::HasParams;
use crate::tensor::Element;

/// Structure-encoder topology.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Backbone {
    /// Standard 18-layer residual network; spatial map (b, s/32, s/32, 512).
    Residual18,
    /// Two 5×5 conv blocks + two dense layers for 32×32 inputs; the
    /// structure "map" is the (b,1,1,512) dense output.
    SmallConv,
}

/// Structure code: the pre-pooling spatial map and its spatial mean.
#[derive(Copy, Clone)]
pub struct StructureCode {
    pub map: Var,
    pub pooled: Var,
}

/// Everything needed to construct the networks deterministically.
#[derive(Clone, Debug)]
pub struct NetworkSettings {
    pub backbone: Backbone,
    pub image_size: usize,
    pub num_classes: usize,
    /// Multiplies interior widths of G, D_I and the texture encoders
    /// (1.0 = the published Table II/III widths).
    pub gan_width_scale: f64,
    /// Multiplies the perceptual extractor's widths (1.0 = standard).
    pub phi_width_scale: f64,
    /// Master initialization seed; per-network streams derive from it.
    pub seed: u64,
}

impl NetworkSettings {
    /// Channel width of the structure code for this backbone.
    pub fn structure_width(&self) -> usize {
        512
    }

    /// Spatial side of the structure map (= generator latent side).
    pub fn latent_side(&self) -> usize {
        match self.backbone {
            Backbone::Residual18 => {
                assert_eq!(self.image_size % 32, 0, "residual-18 needs a multiple of 32");
                self.image_size / 32
            }
            Backbone::SmallConv => 1,
        }
    }
}

/// Applies a width multiplier, never collapsing a layer below one channel.
pub(crate) fn scaled(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).round() as usize).max(1)
}

/// The full model: all trainable networks plus the frozen extractor.
pub struct Networks<T: Element> {
    pub e_g: StructureEncoder<T>,
    pub e_n_s: TextureEncoder<T>,
    pub e_n_t: TextureEncoder<T>,
    pub g: Generator<T>,
    pub d_i_s: ImageDiscriminator<T>,
    pub d_i_t: ImageDiscriminator<T>,
    pub d_f: FeatureDiscriminator<T>,
    pub c: Classifier<T>,
    pub phi: PerceptualExtractor<T>,
    pub settings: NetworkSettings,
}

impl<T: Element> Networks<T> {
    /// Builds every network from the settings seed. Identical settings yield
    /// bit-identical parameters.
    pub fn build(settings: &NetworkSettings) -> Self {
        let mut master = ChaCha12Rng::seed_from_u64(settings.seed);
        // Independent streams per network, drawn in a fixed order.
        let mut next = || ChaCha12Rng::seed_from_u64(master.gen());
        let mut rng_eg = next();
        let mut rng_ens = next();
        let mut rng_ent = next();
        let mut rng_g = next();
        let mut rng_dis = next();
        let mut rng_dit = next();
        let mut rng_df = next();
        let mut rng_c = next();
        let mut rng_phi = next();

        let c_g = settings.structure_width();
        let e_g = StructureEncoder::new("e_g", settings.backbone, &mut rng_eg);
        let stem = e_g.stem().clone();
        let e_n_s = TextureEncoder::new(
            "e_n_s",
            settings.backbone,
            stem.clone(),
            settings.gan_width_scale,
            &mut rng_ens,
        );
        let e_n_t = TextureEncoder::new(
            "e_n_t",
            settings.backbone,
            stem,
            settings.gan_width_scale,
            &mut rng_ent,
        );
        let g = Generator::new("g", c_g + 8 + 2, settings.gan_width_scale, &mut rng_g);
        let d_i_s =
            ImageDiscriminator::new("d_i_s", settings.image_size, settings.gan_width_scale, &mut rng_dis);
        let d_i_t =
            ImageDiscriminator::new("d_i_t", settings.image_size, settings.gan_width_scale, &mut rng_dit);
        let d_f = FeatureDiscriminator::new("d_f", c_g, &mut rng_df);
        let c = Classifier::new("c", c_g, settings.num_classes, &mut rng_c);
        let phi = PerceptualExtractor::fixed_random("phi", settings.phi_width_scale, &mut rng_phi);

        Self {
            e_g,
            e_n_s,
            e_n_t,
            g,
            d_i_s,
            d_i_t,
            d_f,
            c,
            phi,
            settings: settings.clone(),
        }
    }

    /// Parameters of the structure encoder, including the shared stem.
    pub fn params_e_g(&self) -> Vec<Param<T>> {
        self.e_g.params()
    }

    /// Texture-encoder parameters, excluding the aliased stem (owned by E_g).
    pub fn params_e_n_s(&self) -> Vec<Param<T>> {
        self.e_n_s.params()
    }

    pub fn params_e_n_t(&self) -> Vec<Param<T>> {
        self.e_n_t.params()
    }

    pub fn params_g(&self) -> Vec<Param<T>> {
        self.g.params()
    }

    pub fn params_d_i_s(&self) -> Vec<Param<T>> {
        self.d_i_s.params()
    }

    pub fn params_d_i_t(&self) -> Vec<Param<T>> {
        self.d_i_t.params()
    }

    pub fn params_d_f(&self) -> Vec<Param<T>> {
        self.d_f.params()
    }

    pub fn params_c(&self) -> Vec<Param<T>> {
        self.c.params()
    }

    /// Every parameter and buffer of the eight trainable networks, for
    /// checkpointing. The frozen extractor is deliberately excluded: it is
    /// reconstructed from the seed (or reloaded from its weights file).
    pub fn all_persistent(&self) -> Vec<Param<T>> {
        let mut v = Vec::new();
        for group in [
            self.params_e_g(),
            self.params_e_n_s(),
            self.params_e_n_t(),
            self.params_g(),
            self.params_d_i_s(),
            self.params_d_i_t(),
            self.params_d_f(),
            self.params_c(),
        ] {
            v.extend(group);
        }
        v
    }

    /// Convenience: encode an image batch into (structure, texture) with the
    /// texture encoder chosen by `source`.
    pub fn encode(&self, g: &mut Graph<T>, x: Var, source: bool) -> (StructureCode, Var) {
        let sc = self.e_g.forward(g, x);
        let tex = if source {
            self.e_n_s.forward(g, x)
        } else {
            self.e_n_t.forward(g, x)
        };
        (sc, tex)
    }

    /// Loads pretrained structure-encoder weights (the texture encoders see
    /// the new stem too, through the shared handles). Array names and shapes
    /// must match this backbone exactly; the first mismatch is reported.
    pub fn load_structure_weights(&self, path: &std::path::Path) -> Result<(), crate::checkpoint::CheckpointError> {
        let c = crate::checkpoint::load::<T>(path)?;
        crate::checkpoint::apply_arrays(&c.arrays, &self.params_e_g())
    }

    /// Loads perceptual-extractor weights; only standard widths
    /// (phi_width_scale = 1) can match the stored shapes.
    pub fn load_perceptual_weights(&self, path: &std::path::Path) -> Result<(), crate::checkpoint::CheckpointError> {
        let c = crate::checkpoint::load::<T>(path)?;
        crate::checkpoint::apply_arrays(&c.arrays, &self.phi.params())
    }
}
