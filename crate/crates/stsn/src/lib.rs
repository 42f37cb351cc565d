//! Structure–texture separation networks for unsupervised domain adaptation.
//!
//! The model disentangles every image into a structure code (domain-shared
//! glyph geometry) and a texture code (domain-private appearance), swaps
//! texture codes across domains to transform images, aligns the two domains
//! adversarially in structure space, and trains a classifier on source images
//! together with their target-textured transforms.
//!
//! Crate layout:
//! - [`tensor`], [`graph`], [`ops`], [`layers`]: a small deterministic
//!   reverse-mode autodiff stack (f32 for training, f64 for verification);
//! - [`networks`], [`latent`]: the eight networks and the code assembly that
//!   feeds the generator;
//! - [`losses`]: classification, feature/image adversarial, perceptual and
//!   reconstruction objectives;
//! - [`trainer`], [`optim`], [`checkpoint`]: the four-phase update loop with
//!   polynomially-decayed SGD/Adam and bit-exact resume;
//! - [`config`], [`data`], [`eval`]: experiment configuration, corpora and
//!   batch streams, evaluation/export utilities.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod latent;
pub mod layers;
pub mod losses;
pub mod networks;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod trainer;
