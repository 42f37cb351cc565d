//! Procedural glyph corpora: paired clean/degraded sets of stroke-drawn
//! characters with per-sample writing-style jitter, byte-deterministic in
//! the seed. Stand-in for handprinted/scanned character pairs at desk scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::config::SynthTemplate;
use crate::data::degrade::{apply_degradation, DegradationSpec};
use crate::data::{DataError, LabeledCorpus};

/// Class templates derive from this constant, not the corpus seed, so class
/// k draws the same character in every corpus.
const TEMPLATE_SEED: u64 = 0x5459_4C45;

/// One quadratic stroke: endpoints and a control point in unit coordinates.
#[derive(Clone, Copy)]
struct Stroke {
    a: (f32, f32),
    c: (f32, f32),
    b: (f32, f32),
}

impl Stroke {
    fn line(a: (f32, f32), b: (f32, f32)) -> Self {
        Self { a, c: ((a.0 + b.0) * 0.5, (a.1 + b.1) * 0.5), b }
    }

    /// Points along the curve for distance rasterization.
    fn polyline(&self, n: usize) -> Vec<(f32, f32)> {
        (0..=n)
            .map(|i| {
                let t = i as f32 / n as f32;
                let u = 1.0 - t;
                let x = u * u * self.a.0 + 2.0 * u * t * self.c.0 + t * t * self.b.0;
                let y = u * u * self.a.1 + 2.0 * u * t * self.c.1 + t * t * self.b.1;
                (x, y)
            })
            .collect()
    }
}

struct GlyphTemplate {
    strokes: Vec<Stroke>,
    base_width: f32,
}

/// A random but class-stable arrangement of 3–5 connected curved strokes.
fn random_template(class: usize) -> GlyphTemplate {
    let mut rng =
        ChaCha12Rng::seed_from_u64(TEMPLATE_SEED ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let lattice = |rng: &mut ChaCha12Rng| -> (f32, f32) {
        (
            0.2 + 0.6 * (rng.gen_range(0..4) as f32 / 3.0) + rng.gen_range(-0.04..0.04),
            0.2 + 0.6 * (rng.gen_range(0..4) as f32 / 3.0) + rng.gen_range(-0.04..0.04),
        )
    };
    let n = rng.gen_range(3..=5);
    let mut strokes: Vec<Stroke> = Vec::with_capacity(n);
    for i in 0..n {
        // Half the time continue from an existing endpoint for a joined look.
        let a = if i > 0 && rng.gen::<bool>() {
            strokes[rng.gen_range(0..i)].b
        } else {
            lattice(&mut rng)
        };
        let mut b = lattice(&mut rng);
        if (b.0 - a.0).abs() + (b.1 - a.1).abs() < 0.15 {
            b = (1.0 - a.0, 1.0 - a.1); // avoid degenerate dots
        }
        let mid = ((a.0 + b.0) * 0.5, (a.1 + b.1) * 0.5);
        let perp = (-(b.1 - a.1), b.0 - a.0);
        let bow = rng.gen_range(-0.22..0.22);
        let c = (mid.0 + perp.0 * bow, mid.1 + perp.1 * bow);
        strokes.push(Stroke { a, c, b });
    }
    GlyphTemplate { strokes, base_width: 0.07 }
}

/// Ten fixed polyline digit shapes (x right, y down, unit square).
fn digit_template(class: usize) -> GlyphTemplate {
    type Seg = ((f32, f32), (f32, f32));
    let segs: Vec<Seg> = match class {
        0 => vec![
            ((0.32, 0.22), (0.68, 0.22)),
            ((0.68, 0.22), (0.68, 0.78)),
            ((0.68, 0.78), (0.32, 0.78)),
            ((0.32, 0.78), (0.32, 0.22)),
        ],
        1 => vec![((0.40, 0.30), (0.54, 0.20)), ((0.54, 0.20), (0.54, 0.80))],
        2 => vec![
            ((0.32, 0.28), (0.68, 0.24)),
            ((0.68, 0.24), (0.68, 0.48)),
            ((0.68, 0.48), (0.32, 0.78)),
            ((0.32, 0.78), (0.70, 0.78)),
        ],
        3 => vec![
            ((0.32, 0.22), (0.68, 0.28)),
            ((0.68, 0.28), (0.50, 0.48)),
            ((0.50, 0.48), (0.68, 0.70)),
            ((0.68, 0.70), (0.32, 0.78)),
        ],
        4 => vec![
            ((0.64, 0.80), (0.64, 0.20)),
            ((0.64, 0.20), (0.32, 0.58)),
            ((0.32, 0.58), (0.74, 0.58)),
        ],
        5 => vec![
            ((0.68, 0.22), (0.34, 0.22)),
            ((0.34, 0.22), (0.34, 0.48)),
            ((0.34, 0.48), (0.66, 0.52)),
            ((0.66, 0.52), (0.66, 0.74)),
            ((0.66, 0.74), (0.32, 0.78)),
        ],
        6 => vec![
            ((0.62, 0.20), (0.36, 0.50)),
            ((0.36, 0.50), (0.36, 0.76)),
            ((0.36, 0.76), (0.64, 0.76)),
            ((0.64, 0.76), (0.64, 0.54)),
            ((0.64, 0.54), (0.36, 0.54)),
        ],
        7 => vec![((0.30, 0.22), (0.70, 0.22)), ((0.70, 0.22), (0.46, 0.80))],
        8 => vec![
            ((0.36, 0.22), (0.64, 0.22)),
            ((0.64, 0.22), (0.64, 0.50)),
            ((0.64, 0.50), (0.36, 0.50)),
            ((0.36, 0.50), (0.36, 0.22)),
            ((0.36, 0.50), (0.36, 0.78)),
            ((0.36, 0.78), (0.64, 0.78)),
            ((0.64, 0.78), (0.64, 0.50)),
        ],
        9 => vec![
            ((0.64, 0.46), (0.36, 0.46)),
            ((0.36, 0.46), (0.36, 0.24)),
            ((0.36, 0.24), (0.64, 0.24)),
            ((0.64, 0.24), (0.64, 0.50)),
            ((0.64, 0.50), (0.38, 0.80)),
        ],
        other => panic!("digit template {other} does not exist (0..=9)"),
    };
    GlyphTemplate {
        strokes: segs.into_iter().map(|(a, b)| Stroke::line(a, b)).collect(),
        base_width: 0.08,
    }
}

fn template_for(template: SynthTemplate, class: usize) -> GlyphTemplate {
    match template {
        SynthTemplate::Glyphs => random_template(class),
        SynthTemplate::Digits => digit_template(class),
    }
}

/// Per-sample writing-style variation.
struct Jitter {
    rot: f32,
    scale: f32,
    shear: f32,
    tx: f32,
    ty: f32,
    width_mul: f32,
}

fn sample_jitter(rng: &mut ChaCha12Rng) -> Jitter {
    Jitter {
        rot: rng.gen_range(-0.14..0.14),
        scale: rng.gen_range(0.88..1.12),
        shear: rng.gen_range(-0.12..0.12),
        tx: rng.gen_range(-0.05..0.05),
        ty: rng.gen_range(-0.05..0.05),
        width_mul: rng.gen_range(0.8..1.25),
    }
}

/// Renders one jittered glyph onto a (side, side, 3) canvas in [−1, 1]:
/// background −1, ink +1, antialiased stroke edges.
fn render(template: &GlyphTemplate, side: usize, jitter: &Jitter) -> Vec<f32> {
    // Forward-transform the stroke polylines around the canvas center.
    let (sin, cos) = jitter.rot.sin_cos();
    let warp = |(x, y): (f32, f32)| -> (f32, f32) {
        let (cx, cy) = (x - 0.5, y - 0.5);
        let xs = cx + jitter.shear * cy;
        let xr = (xs * cos - cy * sin) * jitter.scale;
        let yr = (xs * sin + cy * cos) * jitter.scale;
        (xr + 0.5 + jitter.tx, yr + 0.5 + jitter.ty)
    };
    let polys: Vec<Vec<(f32, f32)>> = template
        .strokes
        .iter()
        .map(|s| s.polyline(24).into_iter().map(warp).collect())
        .collect();

    let half_w = template.base_width * jitter.width_mul * jitter.scale * 0.5;
    let aa = 0.75 / side as f32;
    let mut out = vec![-1.0f32; side * side * 3];
    for py in 0..side {
        for px in 0..side {
            let p = ((px as f32 + 0.5) / side as f32, (py as f32 + 0.5) / side as f32);
            let mut d2_min = f32::INFINITY;
            for poly in &polys {
                for seg in poly.windows(2) {
                    d2_min = d2_min.min(dist2_to_segment(p, seg[0], seg[1]));
                }
            }
            let alpha = ((half_w - d2_min.sqrt()) / aa + 0.5).clamp(0.0, 1.0);
            let v = alpha * 2.0 - 1.0;
            let base = (py * side + px) * 3;
            out[base] = v;
            out[base + 1] = v;
            out[base + 2] = v;
        }
    }
    out
}

fn dist2_to_segment(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (apx, apy) = (p.0 - a.0, p.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 { ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    dx * dx + dy * dy
}

/// Generates the paired corpora: `clean[i]` is a jittered draw of its class
/// glyph and `degraded[i]` is exactly `clean[i]` pushed through
/// `apply_degradation` with a per-sample seed from a disjoint noise stream.
/// Both sets carry labels; training code must strip the degraded set's.
pub fn synth_glyph_corpus(
    template: SynthTemplate,
    classes: usize,
    per_class: usize,
    side: usize,
    seed: u64,
    degradation: &DegradationSpec,
) -> Result<(LabeledCorpus, LabeledCorpus), DataError> {
    if classes < 2 || per_class < 2 {
        return Err(DataError::BadParams(format!(
            "need at least 2 classes and 2 samples per class, got {classes}×{per_class}"
        )));
    }
    if template == SynthTemplate::Digits && classes > 10 {
        return Err(DataError::BadParams(format!(
            "the digit template set has 10 shapes, got classes={classes}"
        )));
    }
    let mut master = ChaCha12Rng::seed_from_u64(seed);
    let mut jitter_rng = ChaCha12Rng::seed_from_u64(master.gen());
    let mut noise_rng = ChaCha12Rng::seed_from_u64(master.gen());

    let n = classes * per_class;
    let mut clean = Vec::with_capacity(n);
    let mut degraded = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..classes {
        let tpl = template_for(template, class);
        for _ in 0..per_class {
            let jitter = sample_jitter(&mut jitter_rng);
            let img = render(&tpl, side, &jitter);
            let spec = degradation.with_seed(noise_rng.gen());
            degraded.push(apply_degradation(&img, side, &spec));
            clean.push(img);
            labels.push(class);
        }
    }
    Ok((
        LabeledCorpus::new(side, clean, labels.clone(), classes)?,
        LabeledCorpus::new(side, degraded, labels, classes)?,
    ))
}
