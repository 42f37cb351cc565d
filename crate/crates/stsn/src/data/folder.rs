//! Class-per-directory image trees: loading (labeled or flat/unlabeled) and
//! writing, plus the manifest emitted next to generated corpora.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SynthTemplate;
use crate::data::degrade::DegradationSpec;
use crate::data::{resize_bilinear, DataError, LabeledCorpus, UnlabeledCorpus};

/// Recorded next to a written corpus so the generation is reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub template: SynthTemplate,
    pub classes: usize,
    pub per_class: usize,
    pub side: usize,
    pub seed: u64,
    pub degraded: bool,
    pub degradation: DegradationSpec,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let rd = fs::read_dir(dir).map_err(|source| DataError::Io { path: dir.into(), source })?;
    let mut entries: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    entries.sort();
    Ok(entries)
}

fn read_image(path: &Path, side: usize) -> Result<Vec<f32>, DataError> {
    let img = image::open(path)
        .map_err(|e| DataError::UnreadableImage { path: path.into(), reason: e.to_string() })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for p in img.pixels() {
        for c in 0..3 {
            pixels.push(p.0[c] as f32 / 255.0 * 2.0 - 1.0);
        }
    }
    Ok(if w == side && h == side { pixels } else { resize_bilinear(&pixels, w, h, side) })
}

/// Loads a labeled corpus from class subdirectories. Classes are indexed by
/// sorted directory name; files are visited in lexicographic order.
pub fn load_folder_corpus(root: &Path, side: usize) -> Result<LabeledCorpus, DataError> {
    let dirs: Vec<PathBuf> =
        sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if dirs.is_empty() {
        return Err(DataError::EmptyCorpus { path: root.into() });
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (class, dir) in dirs.iter().enumerate() {
        for file in sorted_entries(dir)?.into_iter().filter(|p| p.is_file()) {
            images.push(read_image(&file, side)?);
            labels.push(class);
        }
    }
    if images.is_empty() {
        return Err(DataError::EmptyCorpus { path: root.into() });
    }
    let num_classes = dirs.len();
    LabeledCorpus::new(side, images, labels, num_classes)
}

/// Loads a flat directory of images as an unlabeled corpus.
pub fn load_folder_unlabeled(root: &Path, side: usize) -> Result<UnlabeledCorpus, DataError> {
    let files: Vec<PathBuf> =
        sorted_entries(root)?.into_iter().filter(|p| p.is_file()).collect();
    let mut images = Vec::new();
    for file in files {
        if file.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".toml")) {
            continue; // skip manifests living next to written corpora
        }
        images.push(read_image(&file, side)?);
    }
    if images.is_empty() {
        return Err(DataError::EmptyCorpus { path: root.into() });
    }
    UnlabeledCorpus::new(side, images)
}

/// Writes a corpus as `root/class_XXX/img_XXXXX.png` plus `manifest.toml`.
pub fn write_folder_corpus(
    corpus: &LabeledCorpus,
    root: &Path,
    manifest: &CorpusManifest,
) -> Result<(), DataError> {
    let io = |source| DataError::Io { path: root.into(), source };
    fs::create_dir_all(root).map_err(io)?;
    let side = corpus.side() as u32;
    let mut per_class_counter = vec![0usize; corpus.num_classes()];
    for i in 0..corpus.len() {
        let class = corpus.label(i);
        let dir = root.join(format!("class_{class:03}"));
        fs::create_dir_all(&dir).map_err(|source| DataError::Io { path: dir.clone(), source })?;
        let bytes: Vec<u8> = corpus
            .image(i)
            .iter()
            .map(|&v| (((v + 1.0) * 0.5 * 255.0).round()).clamp(0.0, 255.0) as u8)
            .collect();
        let img: image::RgbImage =
            image::ImageBuffer::from_vec(side, side, bytes).expect("sized from the corpus");
        let path = dir.join(format!("img_{:05}.png", per_class_counter[class]));
        per_class_counter[class] += 1;
        img.save(&path)
            .map_err(|e| DataError::UnreadableImage { path, reason: e.to_string() })?;
    }
    let text = toml::to_string_pretty(manifest)
        .map_err(|e| DataError::BadParams(format!("manifest serialization: {e}")))?;
    fs::write(root.join("manifest.toml"), text).map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::synth_glyph_corpus;

    fn manifest() -> CorpusManifest {
        CorpusManifest {
            template: SynthTemplate::Glyphs,
            classes: 2,
            per_class: 2,
            side: 16,
            seed: 4,
            degraded: false,
            degradation: DegradationSpec::none(),
        }
    }

    #[test]
    fn write_then_load_round_trips_labels_and_order() {
        let (clean, _) = synth_glyph_corpus(
            SynthTemplate::Glyphs,
            2,
            2,
            16,
            4,
            &DegradationSpec::none(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_folder_corpus(&clean, dir.path(), &manifest()).unwrap();
        assert!(dir.path().join("manifest.toml").is_file());
        assert!(dir.path().join("class_000/img_00000.png").is_file());

        let loaded = load_folder_corpus(dir.path(), 16).unwrap();
        assert_eq!(loaded.len(), clean.len());
        assert_eq!(loaded.labels(), clean.labels());
        // PNG quantizes to 8 bits; pixels should agree within one step.
        for i in 0..clean.len() {
            for (a, b) in clean.image(i).iter().zip(loaded.image(i)) {
                assert!((a - b).abs() < 1.01 / 127.5, "quantization error too large");
            }
        }
    }

    #[test]
    fn class_indices_follow_sorted_directory_names() {
        let dir = tempfile::tempdir().unwrap();
        for (name, byte) in [("b_class", 200u8), ("a_class", 20u8)] {
            let sub = dir.path().join(name);
            fs::create_dir(&sub).unwrap();
            let img: image::RgbImage = image::ImageBuffer::from_pixel(4, 4, image::Rgb([byte; 3]));
            img.save(sub.join("x.png")).unwrap();
        }
        let c = load_folder_corpus(dir.path(), 4).unwrap();
        assert_eq!(c.num_classes(), 2);
        assert_eq!(c.labels(), &[0, 1]);
        assert!(c.image(0)[0] < 0.0, "class 0 is the dark a_class image");
        assert!(c.image(1)[0] > 0.0, "class 1 is the bright b_class image");
    }

    #[test]
    fn flat_directories_load_unlabeled_and_empty_roots_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_folder_corpus(dir.path(), 4).unwrap_err();
        assert!(matches!(err, DataError::EmptyCorpus { .. }), "{err}");

        let img: image::RgbImage = image::ImageBuffer::from_pixel(4, 4, image::Rgb([128; 3]));
        img.save(dir.path().join("one.png")).unwrap();
        let u = load_folder_unlabeled(dir.path(), 4).unwrap();
        assert_eq!(u.len(), 1);
    }

    #[test]
    fn unreadable_images_are_reported_with_their_path() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("cls");
        fs::create_dir(&sub).unwrap();
        fs::write(sub.join("broken.png"), b"this is not a png").unwrap();
        let err = load_folder_corpus(dir.path(), 4).unwrap_err();
        assert!(matches!(err, DataError::UnreadableImage { .. }), "{err}");
        assert!(err.to_string().contains("broken.png"));
    }
}
