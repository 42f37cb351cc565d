//! Evaluation protocol: per-domain accuracy, multi-seed aggregation, and
//! feature export with a principal-components quick-look.
//!
//! All measurement here runs in evaluation mode (dropout off, normalization
//! statistics frozen), reads parameters without mutating them, and is a pure
//! function of (parameters, data) — repeated calls agree bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::checkpoint::{self, CheckpointError, Container};
use crate::data::LabeledCorpus;
use crate::graph::Graph;
use crate::latent::Domain;
use crate::networks::{Classifier, StructureEncoder};
use crate::tensor::{Element, Tensor};
use thiserror::Error;

/// Images per forward chunk; results are independent of this value.
const CHUNK: usize = 64;

/// Format version written into feature dumps.
pub const DUMP_VERSION: u8 = 1;

/// What can go wrong while evaluating or exporting features.
#[derive(Debug, Error)]
pub enum EvalError {
    /// The evaluation set holds no samples.
    #[error("cannot evaluate an empty sample set")]
    EmptySet,
    /// Aggregation needs at least two runs (the protocol averages seeds).
    #[error("aggregation needs at least 2 results, got {got}")]
    TooFewRuns { got: usize },
    /// Aggregation inputs disagree on domain or dataset shape.
    #[error("cannot aggregate heterogeneous results: {reason}")]
    Heterogeneous { reason: String },
    /// Reading or writing a feature dump failed.
    #[error(transparent)]
    Dump(#[from] CheckpointError),
}

/// One accuracy measurement: a single checkpoint scored on a single labeled set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Which domain the scored set belongs to.
    pub domain: Domain,
    /// Fraction of correct predictions in [0, 1].
    pub accuracy: f64,
    /// Number of scored samples.
    pub count: usize,
    /// Per-class accuracy, indexed by class; length equals the classifier width.
    pub per_class: Vec<f64>,
    /// Seed of the run that produced the scored parameters.
    pub seed: u64,
}

/// Scores a labeled set with the structure encoder and classifier.
///
/// Predictions are the argmax over logits with ties broken toward the lowest
/// class index. The forward pass runs in evaluation mode, so dropout is off
/// and batch-normalization uses its running averages.
pub fn evaluate<T: Element>(
    e_g: &StructureEncoder<T>,
    c: &Classifier<T>,
    set: &LabeledCorpus,
    domain: Domain,
    seed: u64,
) -> Result<EvalResult, EvalError> {
    if set.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let side = set.side();
    let mut num_classes = 0usize;
    let mut correct = 0usize;
    let mut class_total = Vec::new();
    let mut class_correct = Vec::new();

    let mut start = 0;
    while start < set.len() {
        let end = (start + CHUNK).min(set.len());
        let batch = end - start;
        let mut pixels = Vec::with_capacity(batch * side * side * 3);
        for i in start..end {
            pixels.extend(set.image(i).iter().map(|&v| T::from_f64(v as f64)));
        }

        let mut g = Graph::new(false);
        let x = g.constant(Tensor::from_vec(&[batch, side, side, 3], pixels));
        let code = e_g.forward(&mut g, x);
        let logits = c.forward(&mut g, code.pooled);
        let shape = g.value(logits).shape().to_vec();
        debug_assert_eq!(shape, [batch, shape[1]]);
        num_classes = shape[1];
        class_total.resize(num_classes, 0usize);
        class_correct.resize(num_classes, 0usize);

        let rows = g.value(logits).data();
        for b in 0..batch {
            let row = &rows[b * num_classes..(b + 1) * num_classes];
            let pred = argmax_lowest(row);
            let label = set.label(start + b);
            assert!(
                label < num_classes,
                "label {label} exceeds the classifier's {num_classes} classes"
            );
            class_total[label] += 1;
            if pred == label {
                correct += 1;
                class_correct[label] += 1;
            }
        }
        start = end;
    }

    let per_class = (0..num_classes)
        .map(|k| {
            if class_total[k] == 0 { 0.0 } else { class_correct[k] as f64 / class_total[k] as f64 }
        })
        .collect();
    Ok(EvalResult {
        domain,
        accuracy: correct as f64 / set.len() as f64,
        count: set.len(),
        per_class,
        seed,
    })
}

/// Index of the largest value; exact ties resolve to the lowest index.
fn argmax_lowest<T: Element>(row: &[T]) -> usize {
    let mut arg = 0;
    let mut best = row[0].to_f64();
    for (i, v) in row.iter().enumerate().skip(1) {
        let v = v.to_f64();
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}

/// Reduces per-seed results to (mean, population std), both in percent.
///
/// Inputs must share a domain and dataset shape; the standard deviation uses
/// divisor n. Accuracies are sorted before summation, so the reduction is
/// exactly permutation-invariant.
pub fn aggregate_runs(results: &[EvalResult]) -> Result<(f64, f64), EvalError> {
    if results.len() < 2 {
        return Err(EvalError::TooFewRuns { got: results.len() });
    }
    let first = &results[0];
    for r in &results[1..] {
        if r.domain != first.domain {
            return Err(EvalError::Heterogeneous {
                reason: format!("mixed domains {:?} and {:?}", first.domain, r.domain),
            });
        }
        if r.count != first.count || r.per_class.len() != first.per_class.len() {
            return Err(EvalError::Heterogeneous {
                reason: format!(
                    "mixed datasets: {} samples / {} classes vs {} samples / {} classes",
                    first.count,
                    first.per_class.len(),
                    r.count,
                    r.per_class.len()
                ),
            });
        }
    }

    let mut accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    accs.sort_by(f64::total_cmp);
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok((100.0 * mean, 100.0 * var.sqrt()))
}

/// Renders an aggregate as the tables do: one decimal, `mean ± std`.
pub fn format_mean_std(mean_std: (f64, f64)) -> String {
    format!("{:.1} ± {:.1}", mean_std.0, mean_std.1)
}

/// Pooled structure codes with aligned labels and domain tags.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDump {
    /// Row-major (n, c_g) matrix of pooled structure codes.
    pub features: Vec<f64>,
    /// Number of rows.
    pub n: usize,
    /// Code width (columns).
    pub c_g: usize,
    /// Class label per row.
    pub labels: Vec<usize>,
    /// Domain tag per row.
    pub domains: Vec<Domain>,
    /// Format version of the on-disk container payload.
    pub version: u8,
}

impl FeatureDump {
    /// Encodes every sample of every set and stacks the pooled codes.
    pub fn compute<T: Element>(
        e_g: &StructureEncoder<T>,
        sets: &[(&LabeledCorpus, Domain)],
    ) -> Result<FeatureDump, EvalError> {
        if sets.iter().all(|(s, _)| s.is_empty()) {
            return Err(EvalError::EmptySet);
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut domains = Vec::new();
        let mut c_g = 0usize;

        for &(set, domain) in sets {
            let side = set.side();
            let mut start = 0;
            while start < set.len() {
                let end = (start + CHUNK).min(set.len());
                let batch = end - start;
                let mut pixels = Vec::with_capacity(batch * side * side * 3);
                for i in start..end {
                    pixels.extend(set.image(i).iter().map(|&v| T::from_f64(v as f64)));
                }

                let mut g = Graph::new(false);
                let x = g.constant(Tensor::from_vec(&[batch, side, side, 3], pixels));
                let code = e_g.forward(&mut g, x);
                let pooled = g.value(code.pooled);
                c_g = pooled.shape()[1];
                features.extend(pooled.data().iter().map(|v| v.to_f64()));
                for i in start..end {
                    labels.push(set.label(i));
                    domains.push(domain);
                }
                start = end;
            }
        }

        let n = labels.len();
        debug_assert_eq!(features.len(), n * c_g);
        Ok(FeatureDump { features, n, c_g, labels, domains, version: DUMP_VERSION })
    }

    /// Projects the rows onto their first two principal components.
    ///
    /// Centering plus deterministic power iteration (fixed start vectors, no
    /// randomness), so identical inputs yield identical projections. Returns a
    /// row-major (n, 2) matrix.
    pub fn pca_quick_look(&self) -> Vec<f64> {
        let (n, d) = (self.n, self.c_g);
        let mut centered = self.features.clone();
        for j in 0..d {
            let mean = (0..n).map(|i| centered[i * d + j]).sum::<f64>() / n as f64;
            for i in 0..n {
                centered[i * d + j] -= mean;
            }
        }

        let pc1 = principal_direction(&centered, n, d, None);
        let pc2 = principal_direction(&centered, n, d, Some(&pc1));

        let mut out = vec![0.0; n * 2];
        for i in 0..n {
            let row = &centered[i * d..(i + 1) * d];
            out[i * 2] = dot(row, &pc1);
            out[i * 2 + 1] = dot(row, &pc2);
        }
        out
    }

    /// Writes the dump as a binary array container (header carries n, c_g,
    /// and the format version; arrays are `features`, `labels`, `domains`,
    /// `format_version`, and the `pca` quick-look projection).
    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        let labels: Vec<f64> = self.labels.iter().map(|&l| l as f64).collect();
        let domains: Vec<f64> = self.domains.iter().map(|&d| domain_code(d)).collect();
        let arrays = vec![
            ("features".to_string(), Tensor::from_vec(&[self.n, self.c_g], self.features.clone())),
            ("labels".to_string(), Tensor::from_vec(&[self.n], labels)),
            ("domains".to_string(), Tensor::from_vec(&[self.n], domains)),
            (
                "format_version".to_string(),
                Tensor::from_vec(&[1], vec![f64::from(self.version)]),
            ),
            ("pca".to_string(), Tensor::from_vec(&[self.n, 2], self.pca_quick_look())),
        ];
        checkpoint::save(&Container::weights_only(arrays), path)?;
        Ok(())
    }

    /// Reads a dump written by [`FeatureDump::write`].
    pub fn read(path: &Path) -> Result<FeatureDump, EvalError> {
        let container: Container<f64> = checkpoint::load(path)?;
        let find = |name: &str| -> Result<&Tensor<f64>, EvalError> {
            container
                .arrays
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| corrupt_dump(path, &format!("missing array {name:?}")))
        };

        let version_arr = find("format_version")?;
        let version = version_arr.data()[0];
        if version != f64::from(DUMP_VERSION) {
            return Err(corrupt_dump(path, &format!("unsupported format version {version}")));
        }
        let features = find("features")?;
        if features.shape().len() != 2 {
            return Err(corrupt_dump(path, "features array is not a matrix"));
        }
        let (n, c_g) = (features.shape()[0], features.shape()[1]);
        let labels_arr = find("labels")?;
        let domains_arr = find("domains")?;
        if labels_arr.shape() != [n] || domains_arr.shape() != [n] {
            return Err(corrupt_dump(path, "labels/domains rows do not align with features"));
        }

        let labels = labels_arr.data().iter().map(|&v| v as usize).collect();
        let domains = domains_arr
            .data()
            .iter()
            .map(|&v| {
                if v == 0.0 {
                    Ok(Domain::Source)
                } else if v == 1.0 {
                    Ok(Domain::Target)
                } else {
                    Err(corrupt_dump(path, &format!("bad domain code {v}")))
                }
            })
            .collect::<Result<Vec<Domain>, EvalError>>()?;

        Ok(FeatureDump {
            features: features.data().to_vec(),
            n,
            c_g,
            labels,
            domains,
            version: DUMP_VERSION,
        })
    }

    /// Writes the quick-look scatter as CSV (`pc1,pc2,label,domain` per row).
    pub fn write_quick_look_csv(&self, path: &Path) -> Result<(), EvalError> {
        let pca = self.pca_quick_look();
        let mut text = String::from("pc1,pc2,label,domain\n");
        for i in 0..self.n {
            let _ = writeln!(
                text,
                "{},{},{},{}",
                pca[i * 2],
                pca[i * 2 + 1],
                self.labels[i],
                domain_code(self.domains[i]) as u8
            );
        }
        std::fs::write(path, text).map_err(|source| {
            EvalError::Dump(CheckpointError::Io { path: path.to_path_buf(), source })
        })
    }
}

/// Encodes pooled structure codes for the given sets and writes the dump file.
pub fn export_features<T: Element>(
    e_g: &StructureEncoder<T>,
    sets: &[(&LabeledCorpus, Domain)],
    path: &Path,
) -> Result<FeatureDump, EvalError> {
    let dump = FeatureDump::compute(e_g, sets)?;
    dump.write(path)?;
    Ok(dump)
}

fn domain_code(d: Domain) -> f64 {
    match d {
        Domain::Source => 0.0,
        Domain::Target => 1.0,
    }
}

fn corrupt_dump(path: &Path, reason: &str) -> EvalError {
    EvalError::Dump(CheckpointError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Leading eigenvector of centeredᵀ·centered via power iteration; when
/// `deflate` is given the iterate is kept orthogonal to it, which yields the
/// second component.
fn principal_direction(centered: &[f64], n: usize, d: usize, deflate: Option<&[f64]>) -> Vec<f64> {
    // A fixed smooth ramp start vector keeps the routine free of randomness.
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 / d as f64).collect();
    normalize(&mut v);

    for _ in 0..200 {
        // w = Xᵀ (X v) without materializing the d×d covariance.
        let mut xv = vec![0.0; n];
        for i in 0..n {
            xv[i] = dot(&centered[i * d..(i + 1) * d], &v);
        }
        let mut w = vec![0.0; d];
        for i in 0..n {
            let s = xv[i];
            for j in 0..d {
                w[j] += s * centered[i * d + j];
            }
        }
        if let Some(prev) = deflate {
            let proj = dot(&w, prev);
            for j in 0..d {
                w[j] -= proj * prev[j];
            }
        }
        if !normalize(&mut w) {
            // Degenerate spread (all rows equal); keep the current direction.
            break;
        }
        let drift = 1.0 - dot(&w, &v).abs();
        v = w;
        if drift < 1e-15 {
            break;
        }
    }
    v
}

/// Scales to unit length; returns false for (near-)zero vectors.
fn normalize(v: &mut [f64]) -> bool {
    let norm = dot(v, v).sqrt();
    if norm < 1e-300 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::HasParams;
    use crate::networks::Backbone;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn small_encoder(seed: u64) -> StructureEncoder<f32> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        StructureEncoder::new("e_g", Backbone::SmallConv, &mut rng)
    }

    /// A classifier that ignores its input: zero weights, fixed logit biases.
    fn rigged_classifier(biases: &[f64]) -> Classifier<f32> {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let c: Classifier<f32> = Classifier::new("c", 512, biases.len(), &mut rng);
        for p in c.params() {
            let shape = p.borrow_value().shape().to_vec();
            if shape.len() == 1 {
                let data = biases.iter().map(|&b| b as f32).collect();
                p.set_value(Tensor::from_vec(&shape, data));
            } else {
                p.set_value(Tensor::zeros(&shape));
            }
        }
        c
    }

    fn corpus_with_labels(labels: &[usize], seed: u64) -> LabeledCorpus {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let side = 32;
        let images = labels
            .iter()
            .map(|_| {
                (0..side * side * 3)
                    .map(|_| rand::Rng::gen_range(&mut rng, -1.0f32..1.0))
                    .collect()
            })
            .collect();
        let num_classes = labels.iter().max().unwrap() + 1;
        LabeledCorpus::new(side, images, labels.to_vec(), num_classes).unwrap()
    }

    #[test]
    fn accuracy_oracles_all_correct_and_three_of_four() {
        let e_g = small_encoder(1);
        let c = rigged_classifier(&[1.0, 0.0]);

        let perfect = corpus_with_labels(&[0, 0, 0, 0], 2);
        let r = evaluate(&e_g, &c, &perfect, Domain::Source, 7).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.count, 4);
        assert_eq!(r.per_class, vec![1.0, 0.0]);
        assert_eq!(r.seed, 7);

        let mixed = corpus_with_labels(&[0, 0, 0, 1], 2);
        let r = evaluate(&e_g, &c, &mixed, Domain::Target, 7).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.per_class, vec![1.0, 0.0]);
    }

    #[test]
    fn exact_ties_resolve_to_the_lowest_class_index() {
        let e_g = small_encoder(1);
        // Classes 2 and 5 tie exactly; the tie-break must pick 2.
        let c = rigged_classifier(&[0.0, 0.0, 5.0, 0.0, 0.0, 5.0]);
        let twos = corpus_with_labels(&[2, 2, 2], 3);
        assert_eq!(evaluate(&e_g, &c, &twos, Domain::Source, 0).unwrap().accuracy, 1.0);
        let fives = corpus_with_labels(&[5, 5, 5], 3);
        assert_eq!(evaluate(&e_g, &c, &fives, Domain::Source, 0).unwrap().accuracy, 0.0);
    }

    #[test]
    fn evaluate_is_pure_and_spans_chunk_boundaries() {
        let e_g = small_encoder(4);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let c: Classifier<f32> = Classifier::new("c", 512, 3, &mut rng);
        // 70 samples forces a 64 + 6 chunk split.
        let labels: Vec<usize> = (0..70).map(|i| i % 3).collect();
        let set = corpus_with_labels(&labels, 6);

        let a = evaluate(&e_g, &c, &set, Domain::Target, 1).unwrap();
        let b = evaluate(&e_g, &c, &set, Domain::Target, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_class.len(), 3);
        let recomputed = (0..3)
            .map(|k| a.per_class[k] * labels.iter().filter(|&&l| l == k).count() as f64)
            .sum::<f64>();
        assert!((recomputed / 70.0 - a.accuracy).abs() < 1e-12);
    }

    #[test]
    fn empty_set_is_rejected() {
        // An empty corpus cannot be constructed, so exercise the guard directly.
        assert!(LabeledCorpus::new(32, vec![], vec![], 10).is_err());
    }

    fn result(domain: Domain, accuracy: f64, seed: u64) -> EvalResult {
        EvalResult { domain, accuracy, count: 100, per_class: vec![accuracy; 10], seed }
    }

    #[test]
    fn aggregate_matches_the_closed_forms() {
        let constant: Vec<EvalResult> =
            (0..3).map(|s| result(Domain::Target, 0.50, s)).collect();
        let (mean, std) = aggregate_runs(&constant).unwrap();
        assert_eq!((mean, std), (50.0, 0.0));

        let pair = vec![result(Domain::Target, 0.40, 0), result(Domain::Target, 0.60, 1)];
        let (mean, std) = aggregate_runs(&pair).unwrap();
        assert!((mean - 50.0).abs() < 1e-9, "mean {mean}");
        assert!((std - 10.0).abs() < 1e-9, "std {std}");
        assert_eq!(format_mean_std((mean, std)), "50.0 ± 10.0");
    }

    #[test]
    fn aggregate_rejects_short_and_mixed_inputs() {
        let single = vec![result(Domain::Source, 0.5, 0)];
        assert!(matches!(aggregate_runs(&single), Err(EvalError::TooFewRuns { got: 1 })));

        let mixed_domain = vec![result(Domain::Source, 0.5, 0), result(Domain::Target, 0.5, 1)];
        assert!(matches!(aggregate_runs(&mixed_domain), Err(EvalError::Heterogeneous { .. })));

        let mut mixed_count = vec![result(Domain::Source, 0.5, 0), result(Domain::Source, 0.5, 1)];
        mixed_count[1].count = 99;
        assert!(matches!(aggregate_runs(&mixed_count), Err(EvalError::Heterogeneous { .. })));
    }

    #[test]
    fn aggregate_is_exactly_permutation_invariant() {
        let accs = [0.313, 0.742, 0.551, 0.499, 0.608];
        let fwd: Vec<EvalResult> =
            accs.iter().enumerate().map(|(s, &a)| result(Domain::Target, a, s as u64)).collect();
        let mut rev = fwd.clone();
        rev.reverse();
        let mut rot = fwd.clone();
        rot.rotate_left(2);
        let base = aggregate_runs(&fwd).unwrap();
        assert_eq!(aggregate_runs(&rev).unwrap(), base);
        assert_eq!(aggregate_runs(&rot).unwrap(), base);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]
        /// A constant-prediction classifier scores exactly the predicted
        /// class's empirical frequency.
        #[test]
        fn constant_classifier_matches_class_frequency(
            labels in proptest::collection::vec(0usize..4, 2..10),
            predicted in 0usize..4,
            seed in 0u64..1000,
        ) {
            let e_g = small_encoder(seed);
            let mut biases = [0.0; 4];
            biases[predicted] = 3.0;
            let c = rigged_classifier(&biases);
            let set = corpus_with_labels(&labels, seed ^ 0xABCD);
            let r = evaluate(&e_g, &c, &set, Domain::Source, seed).unwrap();
            let frequency =
                labels.iter().filter(|&&l| l == predicted).count() as f64 / labels.len() as f64;
            prop_assert_eq!(r.accuracy, frequency);
        }
    }

    #[test]
    fn feature_dump_aligns_rows_and_round_trips() {
        let e_g = small_encoder(9);
        let source = corpus_with_labels(&[0, 1, 2, 0, 1, 2], 10);
        let target = corpus_with_labels(&[2, 2, 0, 1], 11);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.bin");
        let dump =
            export_features(&e_g, &[(&source, Domain::Source), (&target, Domain::Target)], &path)
                .unwrap();

        assert_eq!(dump.n, 10);
        assert_eq!(dump.c_g, 512);
        assert_eq!(dump.features.len(), 10 * 512);
        assert_eq!(dump.labels, vec![0, 1, 2, 0, 1, 2, 2, 2, 0, 1]);
        assert_eq!(dump.domains[..6], vec![Domain::Source; 6][..]);
        assert_eq!(dump.domains[6..], vec![Domain::Target; 4][..]);

        let reread = FeatureDump::read(&path).unwrap();
        // f32 codes embed exactly into the f64 container, so the round trip
        // differs only by that widening.
        assert_eq!(reread.labels, dump.labels);
        assert_eq!(reread.domains, dump.domains);
        assert_eq!(reread.features, dump.features);

        // Determinism: exporting again produces byte-identical files.
        let path2 = dir.path().join("features2.bin");
        export_features(&e_g, &[(&source, Domain::Source), (&target, Domain::Target)], &path2)
            .unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

        let csv = dir.path().join("quick_look.csv");
        dump.write_quick_look_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("pc1,pc2,label,domain\n"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn pca_quick_look_separates_synthetic_domains() {
        // Construct codes with known separation: two far-apart centroids and
        // small isotropic spread, embedded in 8 dimensions.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let d = 8;
        let per_domain = 20;
        let mut features = Vec::new();
        let mut domains = Vec::new();
        for domain in [Domain::Source, Domain::Target] {
            let center = if domain == Domain::Source { 5.0 } else { -5.0 };
            for _ in 0..per_domain {
                for j in 0..d {
                    let offset = if j == 0 { center } else { 0.0 };
                    features.push(offset + rand::Rng::gen_range(&mut rng, -0.5..0.5));
                }
                domains.push(domain);
            }
        }
        let n = 2 * per_domain;
        let dump = FeatureDump {
            features,
            n,
            c_g: d,
            labels: vec![0; n],
            domains,
            version: DUMP_VERSION,
        };

        let pca = dump.pca_quick_look();
        let centroid = |dom: Domain| -> [f64; 2] {
            let mut c = [0.0, 0.0];
            let mut count = 0.0;
            for i in 0..n {
                if dump.domains[i] == dom {
                    c[0] += pca[i * 2];
                    c[1] += pca[i * 2 + 1];
                    count += 1.0;
                }
            }
            [c[0] / count, c[1] / count]
        };
        let cs = centroid(Domain::Source);
        let ct = centroid(Domain::Target);
        let between = ((cs[0] - ct[0]).powi(2) + (cs[1] - ct[1]).powi(2)).sqrt();

        let mut within: f64 = 0.0;
        for i in 0..n {
            let c = if dump.domains[i] == Domain::Source { cs } else { ct };
            let dist = ((pca[i * 2] - c[0]).powi(2) + (pca[i * 2 + 1] - c[1]).powi(2)).sqrt();
            within = within.max(dist);
        }
        assert!(
            between > 3.0 * within,
            "between-centroid {between} vs within-domain spread {within}"
        );

        // Same inputs twice → identical projection (no hidden randomness).
        assert_eq!(dump.pca_quick_look(), pca);
    }
}
