//! Loader for the standard IDX image/label containers (optionally gzipped):
//! big-endian dimension headers, raw byte payloads.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;

use crate::data::{resize_bilinear, DataError, LabeledCorpus};

/// Reads a file, transparently decompressing when it carries gzip magic.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path).map_err(|source| DataError::Io { path: path.into(), source })?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|source| DataError::Io { path: path.into(), source })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header<'a>(
    bytes: &'a [u8],
    path: &Path,
    expect_dims: u8,
) -> Result<(Vec<usize>, &'a [u8]), DataError> {
    let bad = |reason: &str| DataError::BadMagic { path: path.into(), reason: reason.into() };
    if bytes.len() < 4 {
        return Err(bad("shorter than the 4-byte magic"));
    }
    let mut r = bytes;
    let magic = r.read_u32::<BigEndian>().expect("length checked");
    if magic >> 8 != 0x08 {
        return Err(bad(&format!("magic 0x{magic:08x} is not an unsigned-byte container")));
    }
    let ndim = (magic & 0xff) as u8;
    if ndim != expect_dims {
        return Err(bad(&format!("expected {expect_dims} dimensions, header says {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let d = r
            .read_u32::<BigEndian>()
            .map_err(|_| bad("truncated inside the dimension header"))?;
        dims.push(d as usize);
    }
    Ok((dims, r))
}

/// Loads an image/label container pair into a labeled corpus at the given
/// side length. Pixels map 0→−1 and 255→+1 exactly; grayscale is replicated
/// to three channels; non-native sizes are bilinearly resampled.
pub fn load_idx_corpus(
    images_path: &Path,
    labels_path: &Path,
    side: usize,
) -> Result<LabeledCorpus, DataError> {
    let image_bytes = read_maybe_gz(images_path)?;
    let (dims, payload) = header(&image_bytes, images_path, 3)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let expected = n * h * w;
    if payload.len() < expected {
        return Err(DataError::Truncated {
            path: images_path.into(),
            expected,
            found: payload.len(),
        });
    }

    let label_bytes = read_maybe_gz(labels_path)?;
    let (ldims, lpayload) = header(&label_bytes, labels_path, 1)?;
    if lpayload.len() < ldims[0] {
        return Err(DataError::Truncated {
            path: labels_path.into(),
            expected: ldims[0],
            found: lpayload.len(),
        });
    }
    if ldims[0] != n {
        return Err(DataError::CountMismatch { images: n, labels: ldims[0] });
    }

    let labels: Vec<usize> = lpayload[..n].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);

    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let plane = &payload[i * h * w..(i + 1) * h * w];
        let mut rgb = Vec::with_capacity(h * w * 3);
        for &b in plane {
            let v = b as f32 / 255.0 * 2.0 - 1.0;
            rgb.extend_from_slice(&[v, v, v]);
        }
        let rgb = if h == side && w == side { rgb } else { resize_bilinear(&rgb, w, h, side) };
        images.push(rgb);
    }
    LabeledCorpus::new(side, images, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::{BigEndian, WriteBytesExt};
    use std::io::Write;

    fn write_images(path: &Path, n: usize, h: usize, w: usize, pixels: &[u8], gz: bool) {
        let mut bytes = Vec::new();
        bytes.write_u32::<BigEndian>(0x0000_0803).unwrap();
        bytes.write_u32::<BigEndian>(n as u32).unwrap();
        bytes.write_u32::<BigEndian>(h as u32).unwrap();
        bytes.write_u32::<BigEndian>(w as u32).unwrap();
        bytes.extend_from_slice(pixels);
        if gz {
            let f = fs::File::create(path).unwrap();
            let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::fast());
            enc.write_all(&bytes).unwrap();
            enc.finish().unwrap();
        } else {
            fs::write(path, bytes).unwrap();
        }
    }

    fn write_labels(path: &Path, labels: &[u8]) {
        let mut bytes = Vec::new();
        bytes.write_u32::<BigEndian>(0x0000_0801).unwrap();
        bytes.write_u32::<BigEndian>(labels.len() as u32).unwrap();
        bytes.extend_from_slice(labels);
        fs::write(path, bytes).unwrap();
    }

    #[test]
    fn endpoint_bytes_map_to_unit_range_and_replicate() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_images(&ip, 1, 2, 2, &[255, 0, 128, 64], false);
        write_labels(&lp, &[3]);
        let c = load_idx_corpus(&ip, &lp, 2).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.num_classes(), 4);
        let img = c.image(0);
        assert_eq!(img[0], 1.0, "byte 255 → +1.0 exactly");
        assert_eq!(img[1], 1.0, "replicated channel");
        assert_eq!(img[2], 1.0);
        assert_eq!(img[3], -1.0, "byte 0 → −1.0 exactly");
    }

    #[test]
    fn gzip_payloads_load_transparently_and_resize_applies() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.gz"), dir.path().join("l"));
        let pixels: Vec<u8> = (0..2 * 4 * 4).map(|i| (i * 7 % 256) as u8).collect();
        write_images(&ip, 2, 4, 4, &pixels, true);
        write_labels(&lp, &[0, 1]);
        let c = load_idx_corpus(&ip, &lp, 6).unwrap();
        assert_eq!(c.side(), 6);
        assert_eq!(c.image(0).len(), 6 * 6 * 3);
        assert!(c.image(0).iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_file_is_a_bad_magic_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, b"").unwrap();
        write_labels(&lp, &[0]);
        let err = load_idx_corpus(&ip, &lp, 4).unwrap_err();
        assert!(matches!(err, DataError::BadMagic { .. }), "{err}");
    }

    #[test]
    fn count_mismatch_and_truncation_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_images(&ip, 2, 2, 2, &[0; 8], false);
        write_labels(&lp, &[0, 1, 1]);
        let err = load_idx_corpus(&ip, &lp, 2).unwrap_err();
        assert!(matches!(err, DataError::CountMismatch { images: 2, labels: 3 }), "{err}");

        write_images(&ip, 2, 2, 2, &[0; 5], false);
        write_labels(&lp, &[0, 1]);
        let err = load_idx_corpus(&ip, &lp, 2).unwrap_err();
        assert!(matches!(err, DataError::Truncated { .. }), "{err}");
    }

    proptest::proptest! {
        #[test]
        fn random_bytes_always_land_strictly_inside_unit_range(
            bytes in proptest::collection::vec(0u8..=255, 9),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
            write_images(&ip, 1, 3, 3, &bytes, false);
            write_labels(&lp, &[1]);
            let c = load_idx_corpus(&ip, &lp, 3).unwrap();
            proptest::prop_assert!(c.image(0).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
