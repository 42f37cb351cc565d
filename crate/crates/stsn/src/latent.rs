//! Disentanglement and transformation algebra: assemble latent codes with
//! domain tags, swap textures across domains, decode the quadruple.

use crate::graph::{Graph, Var};
use crate::networks::{Networks, StructureCode};
use crate::tensor::{Element, Tensor};

/// Which side of the adaptation pair an image batch belongs to.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// One-hot code concatenated into the generator latent.
    pub fn one_hot<T: Element>(self) -> [T; 2] {
        match self {
            Domain::Source => [T::ONE, T::ZERO],
            Domain::Target => [T::ZERO, T::ONE],
        }
    }

    pub fn is_source(self) -> bool {
        self == Domain::Source
    }
}

/// A generator input: structure map ⊕ broadcast texture ⊕ broadcast domain.
pub struct LatentAssembly {
    pub structure: Var,
    pub texture: Var,
    pub domain: Domain,
    /// (batch, h', w', c_g + 8 + 2) concatenation.
    pub assembled: Var,
}

/// Builds the generator input from a structure map (b,h',w',c_g), a texture
/// code (b,8) and a domain tag. Texture and domain are spatially constant.
pub fn assemble<T: Element>(
    g: &mut Graph<T>,
    structure: Var,
    texture: Var,
    domain: Domain,
) -> LatentAssembly {
    let sshape = g.value(structure).shape().to_vec();
    let tshape = g.value(texture).shape().to_vec();
    assert_eq!(sshape.len(), 4, "structure map must be 4-axis");
    assert_eq!(tshape, [sshape[0], 8], "texture code must be (batch, 8)");
    let (b, h, w) = (sshape[0], sshape[1], sshape[2]);

    let tex4 = g.reshape(texture, &[b, 1, 1, 8]);
    let tex_b = g.broadcast_hw(tex4, h, w);

    let one_hot = domain.one_hot::<T>();
    let mut dom_data = Vec::with_capacity(b * h * w * 2);
    for _ in 0..b * h * w {
        dom_data.extend_from_slice(&one_hot);
    }
    let dom = g.constant(Tensor::from_vec(&[b, h, w, 2], dom_data));

    let assembled = g.concat_last(&[structure, tex_b, dom]);
    LatentAssembly { structure, texture, domain, assembled }
}

/// Splits an assembled latent back into (structure map, texture code, domain
/// one-hot); the inverse of [`assemble`] up to the broadcast.
pub fn split_assembled<T: Element>(
    assembled: &Tensor<T>,
    c_g: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let shape = assembled.shape();
    assert_eq!(shape.len(), 4, "assembled latent must be 4-axis");
    let (b, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    assert_eq!(c, c_g + 10, "assembled channels must be c_g + 8 + 2");

    let mut structure = Vec::with_capacity(b * h * w * c_g);
    let mut texture = Vec::with_capacity(b * 8);
    let mut domain = Vec::with_capacity(b * 2);
    let data = assembled.data();
    for n in 0..b {
        for p in 0..h * w {
            let row = &data[(n * h * w + p) * c..(n * h * w + p) * c + c];
            structure.extend_from_slice(&row[..c_g]);
            if p == 0 {
                texture.extend_from_slice(&row[c_g..c_g + 8]);
                domain.extend_from_slice(&row[c_g + 8..]);
            } else {
                debug_assert!(
                    row[c_g..] == data[(n * h * w) * c + c_g..(n * h * w) * c + c],
                    "texture/domain channels must be spatially constant"
                );
            }
        }
    }
    (
        Tensor::from_vec(&[b, h, w, c_g], structure),
        Tensor::from_vec(&[b, 8], texture),
        Tensor::from_vec(&[b, 2], domain),
    )
}

/// The per-batch encodings behind a quadruple, reused by several losses.
pub struct PairCodes {
    pub structure_s: StructureCode,
    pub structure_t: StructureCode,
    pub texture_s: Var,
    pub texture_t: Var,
}

/// The two reconstructions and two cross-domain transforms of one
/// source/target batch pair, plus the codes they were decoded from.
pub struct Quadruple {
    pub codes: PairCodes,
    /// Source structure + source texture (reconstruction).
    pub x_ss: Var,
    /// Target structure + target texture (reconstruction).
    pub x_tt: Var,
    /// Source structure + target texture: the target-like transform that
    /// carries the *source* label forward (label transfer contract).
    pub x_st: Var,
    /// Target structure + source texture (source-like transform).
    pub x_ts: Var,
}

/// Encodes both batches and decodes all four structure/texture pairings.
/// Pairing is index-wise, so the per-domain batch sizes must agree.
pub fn transform_quadruple<T: Element>(
    g: &mut Graph<T>,
    nets: &Networks<T>,
    x_s: Var,
    x_t: Var,
) -> Quadruple {
    let bs = g.value(x_s).shape()[0];
    let bt = g.value(x_t).shape()[0];
    assert_eq!(bs, bt, "index-wise texture swapping needs equal batch sizes");

    let (structure_s, texture_s) = nets.encode(g, x_s, true);
    let (structure_t, texture_t) = nets.encode(g, x_t, false);

    let z_ss = assemble(g, structure_s.map, texture_s, Domain::Source);
    let z_tt = assemble(g, structure_t.map, texture_t, Domain::Target);
    let z_st = assemble(g, structure_s.map, texture_t, Domain::Target);
    let z_ts = assemble(g, structure_t.map, texture_s, Domain::Source);

    Quadruple {
        codes: PairCodes { structure_s, structure_t, texture_s, texture_t },
        x_ss: nets.g.forward(g, z_ss.assembled),
        x_tt: nets.g.forward(g, z_tt.assembled),
        x_st: nets.g.forward(g, z_st.assembled),
        x_ts: nets.g.forward(g, z_ts.assembled),
    }
}
