//! Seeded two-domain batch stream: independent per-domain reshuffling each
//! epoch, full batches only, optional pad-then-crop and horizontal flip.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::data::degrade::BACKGROUND;
use crate::data::{DataError, ImageBatch, LabeledCorpus, UnlabeledCorpus};
use crate::latent::Domain;

/// Which augmentations the stream applies to both domains.
#[derive(Copy, Clone, Debug, Default)]
pub struct AugmentFlags {
    pub crop: bool,
    pub flip: bool,
}

/// Infinite iterator of (source, target) batch pairs; the i-th source sample
/// in a step pairs with the i-th target sample for the texture swap.
#[derive(Debug)]
pub struct BatchStream<'a> {
    source: &'a LabeledCorpus,
    target: &'a UnlabeledCorpus,
    batch: usize,
    augment: AugmentFlags,
    src_order: Vec<usize>,
    tgt_order: Vec<usize>,
    src_cursor: usize,
    tgt_cursor: usize,
    src_rng: ChaCha12Rng,
    tgt_rng: ChaCha12Rng,
    aug_rng: ChaCha12Rng,
}

/// Builds the stream after checking both corpora can fill a batch.
pub fn batch_stream<'a>(
    source: &'a LabeledCorpus,
    target: &'a UnlabeledCorpus,
    batch_per_domain: usize,
    seed: u64,
    augment: AugmentFlags,
) -> Result<BatchStream<'a>, DataError> {
    if batch_per_domain == 0 {
        return Err(DataError::BadParams("batch size must be positive".into()));
    }
    for available in [source.len(), target.len()] {
        if batch_per_domain > available {
            return Err(DataError::BatchTooLarge { batch: batch_per_domain, available });
        }
    }
    assert_eq!(source.side(), target.side(), "domains must share the image side");
    let mut master = ChaCha12Rng::seed_from_u64(seed);
    let mut src_rng = ChaCha12Rng::seed_from_u64(master.gen());
    let mut tgt_rng = ChaCha12Rng::seed_from_u64(master.gen());
    let aug_rng = ChaCha12Rng::seed_from_u64(master.gen());
    let mut src_order: Vec<usize> = (0..source.len()).collect();
    src_order.shuffle(&mut src_rng);
    let mut tgt_order: Vec<usize> = (0..target.len()).collect();
    tgt_order.shuffle(&mut tgt_rng);
    Ok(BatchStream {
        source,
        target,
        batch: batch_per_domain,
        augment,
        src_order,
        tgt_order,
        src_cursor: 0,
        tgt_cursor: 0,
        src_rng,
        tgt_rng,
        aug_rng,
    })
}

impl BatchStream<'_> {
    /// Indices of the next full batch, reshuffling at epoch end (partial
    /// trailing batches are dropped, so an epoch is ⌊n/batch⌋ steps).
    fn take_indices(
        order: &mut Vec<usize>,
        cursor: &mut usize,
        batch: usize,
        rng: &mut ChaCha12Rng,
    ) -> Vec<usize> {
        let usable = order.len() - order.len() % batch;
        if *cursor + batch > usable {
            order.shuffle(rng);
            *cursor = 0;
        }
        let picked = order[*cursor..*cursor + batch].to_vec();
        *cursor += batch;
        picked
    }

    /// Copies one image into the batch buffer, applying this stream's
    /// augmentations. Crop pads by side/8 with background and re-crops.
    fn emit(&mut self, img: &[f32], side: usize, out: &mut Vec<f32>) {
        let flip = self.augment.flip && self.aug_rng.gen::<bool>();
        let pad = (side / 8).max(1);
        let (dx, dy) = if self.augment.crop {
            (self.aug_rng.gen_range(0..=2 * pad), self.aug_rng.gen_range(0..=2 * pad))
        } else {
            (pad, pad) // centered: identity
        };
        if !self.augment.crop && !flip {
            out.extend_from_slice(img);
            return;
        }
        for y in 0..side {
            for x in 0..side {
                let sx = if flip { side - 1 - x } else { x };
                // Position in the padded canvas, mapped back to the image.
                let (px, py) = (sx + dx, y + dy);
                let (ix, iy) = (px as i64 - pad as i64, py as i64 - pad as i64);
                if ix < 0 || iy < 0 || ix >= side as i64 || iy >= side as i64 {
                    out.extend_from_slice(&[BACKGROUND; 3]);
                } else {
                    let base = (iy as usize * side + ix as usize) * 3;
                    out.extend_from_slice(&img[base..base + 3]);
                }
            }
        }
    }

    /// One training step's pair of batches.
    pub fn next_pair(&mut self) -> (ImageBatch, ImageBatch) {
        let side = self.source.side();
        let src_idx = Self::take_indices(
            &mut self.src_order,
            &mut self.src_cursor,
            self.batch,
            &mut self.src_rng,
        );
        let tgt_idx = Self::take_indices(
            &mut self.tgt_order,
            &mut self.tgt_cursor,
            self.batch,
            &mut self.tgt_rng,
        );

        let mut src_pixels = Vec::with_capacity(self.batch * side * side * 3);
        let mut labels = Vec::with_capacity(self.batch);
        for &i in &src_idx {
            let img = self.source.image(i).to_vec();
            self.emit(&img, side, &mut src_pixels);
            labels.push(self.source.label(i));
        }
        let mut tgt_pixels = Vec::with_capacity(self.batch * side * side * 3);
        for &i in &tgt_idx {
            let img = self.target.image(i).to_vec();
            self.emit(&img, side, &mut tgt_pixels);
        }

        (
            ImageBatch::new(src_pixels, self.batch, side, Domain::Source, Some(labels)),
            ImageBatch::new(tgt_pixels, self.batch, side, Domain::Target, None),
        )
    }
}

impl Iterator for BatchStream<'_> {
    type Item = (ImageBatch, ImageBatch);

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_pair())
    }
}
