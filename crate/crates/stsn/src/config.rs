//! Experiment configuration: a single TOML file with defaults for every
//! knob, strict validation, dotted-path `--set` overrides, and round-trip
//! serialization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::networks::{Backbone, NetworkSettings, TAP_NAMES};

/// Environment variable naming the directory all relative output paths are
/// resolved under.
pub const OUTPUT_ROOT_ENV: &str = "STSN_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid {field}: {constraint}")]
    Invalid { field: String, constraint: String },
    #[error("unknown ablation preset {0:?} (expected source-only, model-A..model-E, or full)")]
    UnknownPreset(String),
    #[error("bad override {0:?}: expected dotted.key=value")]
    BadOverride(String),
}

fn invalid(field: &str, constraint: &str) -> ConfigError {
    ConfigError::Invalid { field: field.into(), constraint: constraint.into() }
}

/// Trade-off coefficients α₁..α₄ of the total objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Feature-adversarial weight.
    pub alpha1: f64,
    /// Image-adversarial weight.
    pub alpha2: f64,
    /// Perceptual weight.
    pub alpha3: f64,
    /// Reconstruction weight.
    pub alpha4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha1: 1.0, alpha2: 0.01, alpha3: 0.05, alpha4: 0.5 }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("loss.alpha1", self.alpha1),
            ("loss.alpha2", self.alpha2),
            ("loss.alpha3", self.alpha3),
            ("loss.alpha4", self.alpha4),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(name, "must be finite and ≥ 0"));
            }
        }
        Ok(())
    }
}

/// Named perceptual taps with per-layer weights λ_l, split into the texture
/// set (shallow), structure set (deep), and their union for reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptualSpec {
    pub texture_taps: Vec<(String, f64)>,
    pub structure_taps: Vec<(String, f64)>,
    pub reconstruction_taps: Vec<(String, f64)>,
}

impl Default for PerceptualSpec {
    fn default() -> Self {
        let t = |n: &str, w: f64| (n.to_string(), w);
        Self {
            texture_taps: vec![t("relu1_1", 1.0), t("relu2_1", 1.0), t("relu3_1", 1.0)],
            structure_taps: vec![t("relu4_1", 0.25), t("relu5_1", 1.0)],
            reconstruction_taps: vec![
                t("relu1_1", 1.0 / 32.0),
                t("relu2_1", 1.0 / 16.0),
                t("relu3_1", 1.0 / 8.0),
                t("relu4_1", 0.25),
                t("relu5_1", 1.0),
            ],
        }
    }
}

impl PerceptualSpec {
    fn validate(&self) -> Result<(), ConfigError> {
        for (field, taps) in [
            ("perceptual.texture_taps", &self.texture_taps),
            ("perceptual.structure_taps", &self.structure_taps),
            ("perceptual.reconstruction_taps", &self.reconstruction_taps),
        ] {
            if taps.is_empty() {
                return Err(invalid(field, "must name at least one tap"));
            }
            for (name, w) in taps {
                if !TAP_NAMES.contains(&name.as_str()) {
                    return Err(invalid(field, &format!("unknown tap {name:?}")));
                }
                if !w.is_finite() || *w <= 0.0 {
                    return Err(invalid(field, &format!("weight for {name} must be > 0")));
                }
            }
        }
        fn names(taps: &[(String, f64)]) -> Vec<&str> {
            let mut v: Vec<&str> = taps.iter().map(|(n, _)| n.as_str()).collect();
            v.sort_unstable();
            v
        }
        let mut union = names(&self.texture_taps);
        union.extend(names(&self.structure_taps));
        union.sort_unstable();
        union.dedup();
        if names(&self.reconstruction_taps) != union {
            return Err(invalid(
                "perceptual.reconstruction_taps",
                "must equal texture_taps ∪ structure_taps as a name set",
            ));
        }
        Ok(())
    }
}

/// Polynomial learning-rate decay η₀·(1 − T/T_max)^exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub base_rate: f64,
    pub total_iterations: u64,
    pub exponent: f64,
}

/// Optimizer family for one parameter group.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer settings for one of the three update groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// SGD momentum, or the first-moment decay for Adam.
    pub momentum: f64,
    /// Second-moment decay (Adam only; ignored for SGD).
    pub beta2: f64,
    pub weight_decay: f64,
    pub base_rate: f64,
    pub exponent: f64,
}

impl OptimizerSpec {
    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(invalid(&format!("{field}.momentum"), "must lie in [0, 1)"));
        }
        if !(self.beta2.is_finite() && (0.0..1.0).contains(&self.beta2)) {
            return Err(invalid(&format!("{field}.beta2"), "must lie in [0, 1)"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(invalid(&format!("{field}.weight_decay"), "must be finite and ≥ 0"));
        }
        if !self.base_rate.is_finite() || self.base_rate <= 0.0 {
            return Err(invalid(&format!("{field}.base_rate"), "must be > 0"));
        }
        if !self.exponent.is_finite() || self.exponent <= 0.0 {
            return Err(invalid(&format!("{field}.exponent"), "must be > 0"));
        }
        Ok(())
    }
}

/// The three optimizer groups of the update algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSet {
    /// Structure encoder + classifier (momentum SGD with weight decay).
    pub backbone: OptimizerSpec,
    /// Feature and image discriminators.
    pub discriminators: OptimizerSpec,
    /// Texture encoders + generator.
    pub generators: OptimizerSpec,
}

impl Default for OptimizerSet {
    fn default() -> Self {
        Self {
            backbone: OptimizerSpec {
                kind: OptimizerKind::Sgd,
                momentum: 0.9,
                beta2: 0.999,
                weight_decay: 5e-4,
                base_rate: 2.5e-4,
                exponent: 0.9,
            },
            discriminators: OptimizerSpec {
                kind: OptimizerKind::Adam,
                momentum: 0.99,
                beta2: 0.999,
                weight_decay: 0.0,
                base_rate: 1e-4,
                exponent: 0.9,
            },
            generators: OptimizerSpec {
                kind: OptimizerKind::Adam,
                momentum: 0.99,
                beta2: 0.999,
                weight_decay: 0.0,
                base_rate: 1e-3,
                exponent: 0.9,
            },
        }
    }
}

/// Which loss terms participate in a run (the ablation switchboard; the
/// source classification loss is always on).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub use_adv_f: bool,
    pub use_adv_i: bool,
    pub use_rec: bool,
    pub use_per: bool,
    pub use_cls_st: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { use_adv_f: true, use_adv_i: true, use_rec: true, use_per: true, use_cls_st: true }
    }
}

/// Resolves an ablation preset name to its flag set.
pub fn preset_ablation(name: &str) -> Result<AblationFlags, ConfigError> {
    let f = |use_adv_f, use_adv_i, use_rec, use_per, use_cls_st| AblationFlags {
        use_adv_f,
        use_adv_i,
        use_rec,
        use_per,
        use_cls_st,
    };
    Ok(match name {
        "source-only" => f(false, false, false, false, false),
        "model-A" => f(false, true, true, true, true),
        "model-B" => f(true, false, false, false, false),
        "model-C" => f(true, true, false, false, false),
        "model-D" => f(true, true, true, false, false),
        "model-E" => f(true, true, true, true, false),
        "full" => f(true, true, true, true, true),
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    })
}

/// Ablation section: a preset resolved first, then per-flag overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSpec {
    /// One of source-only, model-A..model-E, full.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_adv_f: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_adv_i: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_rec: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_per: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_cls_st: Option<bool>,
}

impl AblationSpec {
    /// The effective flags: start from the preset (all-on when absent), then
    /// apply any explicitly set flags on top.
    pub fn resolve(&self) -> Result<AblationFlags, ConfigError> {
        let mut flags = match &self.preset {
            Some(name) => preset_ablation(name)?,
            None => AblationFlags::default(),
        };
        if let Some(v) = self.use_adv_f {
            flags.use_adv_f = v;
        }
        if let Some(v) = self.use_adv_i {
            flags.use_adv_i = v;
        }
        if let Some(v) = self.use_rec {
            flags.use_rec = v;
        }
        if let Some(v) = self.use_per {
            flags.use_per = v;
        }
        if let Some(v) = self.use_cls_st {
            flags.use_cls_st = v;
        }
        Ok(flags)
    }
}

/// Where a corpus comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Standard IDX image/label container pair, optionally gzipped.
    Idx { images: String, labels: String },
    /// Class-per-directory image tree (`labeled = false` reads a flat dir).
    Folder { root: String, labeled: bool },
    /// Procedurally drawn stroke glyphs or digit templates; `degraded`
    /// selects the noisy half of the generated pair.
    Synth {
        template: SynthTemplate,
        classes: usize,
        per_class: usize,
        degraded: bool,
        seed: u64,
    },
}

/// Which template family the synthesizer draws.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTemplate {
    /// Random procedural stroke glyphs (oracle-like).
    Glyphs,
    /// The ten fixed digit polylines (digit-task stand-in).
    Digits,
}

impl DatasetSpec {
    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        match self {
            DatasetSpec::Idx { images, labels } => {
                if images.is_empty() || labels.is_empty() {
                    return Err(invalid(field, "images and labels paths must be non-empty"));
                }
            }
            DatasetSpec::Folder { root, .. } => {
                if root.is_empty() {
                    return Err(invalid(field, "root path must be non-empty"));
                }
            }
            DatasetSpec::Synth { template, classes, per_class, .. } => {
                if *classes < 2 {
                    return Err(invalid(field, "synth needs at least 2 classes"));
                }
                if *template == SynthTemplate::Digits && *classes > 10 {
                    return Err(invalid(field, "digit template offers at most 10 classes"));
                }
                if *per_class < 2 {
                    return Err(invalid(field, "synth needs at least 2 samples per class"));
                }
            }
        }
        Ok(())
    }
}

/// Data sources plus batching and augmentation knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub source: DatasetSpec,
    pub target: DatasetSpec,
    /// Labeled set for target accuracy; defaults to the target training set
    /// with its withheld labels revealed (the transductive protocol).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_target: Option<DatasetSpec>,
    /// Labeled set for source accuracy; defaults to the source training set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_source: Option<DatasetSpec>,
    #[serde(default = "default_image_side")]
    pub image_side: usize,
    #[serde(default = "default_batch")]
    pub batch_per_domain: usize,
    #[serde(default = "default_true")]
    pub augment_crop: bool,
    #[serde(default = "default_true")]
    pub augment_flip: bool,
}

fn default_image_side() -> usize {
    32
}
fn default_batch() -> usize {
    16
}
fn default_true() -> bool {
    true
}

/// Network construction knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub backbone: BackboneChoice,
    pub num_classes: usize,
    pub gan_width_scale: f64,
    pub phi_width_scale: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneChoice {
    Residual18,
    SmallConv,
}

impl From<BackboneChoice> for Backbone {
    fn from(c: BackboneChoice) -> Backbone {
        match c {
            BackboneChoice::Residual18 => Backbone::Residual18,
            BackboneChoice::SmallConv => Backbone::SmallConv,
        }
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            backbone: BackboneChoice::SmallConv,
            num_classes: 10,
            gan_width_scale: 1.0,
            phi_width_scale: 1.0,
        }
    }
}

/// Iteration budget and artifact cadence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSpec {
    pub t_max: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    /// Metrics CSV row cadence (1 = every iteration).
    pub log_every: u64,
}

impl Default for TrainerSpec {
    fn default() -> Self {
        Self { t_max: 150_000, eval_every: 500, checkpoint_every: 1000, log_every: 1 }
    }
}

/// The complete, validated experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub data: DataSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub perceptual: PerceptualSpec,
    #[serde(default)]
    pub optim: OptimizerSet,
    #[serde(default)]
    pub trainer: TrainerSpec,
    #[serde(default)]
    pub ablation: AblationSpec,
}

fn default_output_dir() -> String {
    "runs/default".to_string()
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides, validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut tree: toml::Value = text.parse()?;
        for ov in overrides {
            apply_override(&mut tree, ov)?;
        }
        let cfg: ExperimentConfig = tree.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, applying overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, overrides)
    }

    /// Serializes back to canonical TOML (round-trips through `from_toml`).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.loss.validate()?;
        self.perceptual.validate()?;
        self.optim.backbone.validate("optim.backbone")?;
        self.optim.discriminators.validate("optim.discriminators")?;
        self.optim.generators.validate("optim.generators")?;
        self.ablation.resolve()?;

        self.data.source.validate("data.source")?;
        self.data.target.validate("data.target")?;
        if let Some(ds) = &self.data.eval_target {
            ds.validate("data.eval_target")?;
        }
        if let Some(ds) = &self.data.eval_source {
            ds.validate("data.eval_source")?;
        }
        if self.data.batch_per_domain < 2 {
            return Err(invalid("data.batch_per_domain", "must be ≥ 2 (batch statistics)"));
        }
        if self.data.image_side < 8 {
            return Err(invalid("data.image_side", "must be ≥ 8"));
        }
        if self.model.backbone == BackboneChoice::Residual18 && self.data.image_side % 32 != 0 {
            return Err(invalid("data.image_side", "residual-18 needs a multiple of 32"));
        }
        if self.model.backbone == BackboneChoice::SmallConv && self.data.image_side != 32 {
            return Err(invalid("data.image_side", "the small backbone is fixed at 32"));
        }
        if self.model.num_classes < 2 {
            return Err(invalid("model.num_classes", "must be ≥ 2"));
        }
        for (field, scale) in [
            ("model.gan_width_scale", self.model.gan_width_scale),
            ("model.phi_width_scale", self.model.phi_width_scale),
        ] {
            if !scale.is_finite() || scale <= 0.0 || scale > 1.0 {
                return Err(invalid(field, "must lie in (0, 1]"));
            }
        }
        if let DatasetSpec::Synth { classes, .. } = &self.data.source {
            if *classes != self.model.num_classes {
                return Err(invalid(
                    "model.num_classes",
                    "must match data.source synth class count",
                ));
            }
        }
        if self.trainer.t_max == 0 {
            return Err(invalid("trainer.t_max", "must be ≥ 1"));
        }
        if self.trainer.log_every == 0 || self.trainer.eval_every == 0 || self.trainer.checkpoint_every == 0
        {
            return Err(invalid("trainer", "cadences must be ≥ 1"));
        }
        Ok(())
    }

    /// Network construction settings implied by this config.
    pub fn network_settings(&self) -> NetworkSettings {
        NetworkSettings {
            backbone: self.model.backbone.into(),
            image_size: self.data.image_side,
            num_classes: self.model.num_classes,
            gan_width_scale: self.model.gan_width_scale,
            phi_width_scale: self.model.phi_width_scale,
            seed: self.seed,
        }
    }

    /// Per-group learning-rate schedules keyed by group name.
    pub fn schedules(&self) -> BTreeMap<&'static str, ScheduleSpec> {
        let mk = |o: &OptimizerSpec| ScheduleSpec {
            base_rate: o.base_rate,
            total_iterations: self.trainer.t_max,
            exponent: o.exponent,
        };
        BTreeMap::from([
            ("backbone", mk(&self.optim.backbone)),
            ("discriminators", mk(&self.optim.discriminators)),
            ("generators", mk(&self.optim.generators)),
        ])
    }

    /// The output directory, resolved under [`OUTPUT_ROOT_ENV`] when that is
    /// set and the configured path is relative.
    pub fn resolved_output_dir(&self) -> std::path::PathBuf {
        let configured = std::path::PathBuf::from(&self.output_dir);
        if configured.is_relative() {
            if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
                if !root.is_empty() {
                    return std::path::PathBuf::from(root).join(configured);
                }
            }
        }
        configured
    }
}

/// Applies one `dotted.path=value` override to a parsed TOML tree. The value
/// is parsed as TOML (so numbers and booleans type correctly) with a fall
/// back to a plain string.
fn apply_override(tree: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::BadOverride(spec.to_string());
    let (path, raw) = spec.split_once('=').ok_or_else(bad)?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) || raw.is_empty() {
        return Err(bad());
    }
    // A bare scalar is not a TOML document; wrap it in a key to type it
    // (numbers, booleans, arrays), falling back to a plain string.
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    };

    let mut node = tree;
    for seg in &segments[..segments.len() - 1] {
        let table = node.as_table_mut().ok_or_else(bad)?;
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(bad)?;
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
        [data.source]
        kind = "synth"
        template = "glyphs"
        classes = 10
        per_class = 50
        degraded = false
        seed = 7

        [data.target]
        kind = "synth"
        template = "glyphs"
        classes = 10
        per_class = 50
        degraded = true
        seed = 7
    "#;

    #[test]
    fn minimal_file_fills_published_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.loss, LossWeights { alpha1: 1.0, alpha2: 0.01, alpha3: 0.05, alpha4: 0.5 });
        assert_eq!(cfg.optim.backbone.base_rate, 2.5e-4);
        assert_eq!(cfg.optim.backbone.weight_decay, 5e-4);
        assert_eq!(cfg.optim.discriminators.base_rate, 1e-4);
        assert_eq!(cfg.optim.generators.base_rate, 1e-3);
        assert_eq!(cfg.trainer.t_max, 150_000);
        assert_eq!(cfg.data.batch_per_domain, 16);
        let rec: Vec<f64> = cfg.perceptual.reconstruction_taps.iter().map(|(_, w)| *w).collect();
        assert_eq!(rec, [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 0.25, 1.0]);
        assert!(cfg.perceptual.texture_taps.iter().all(|(_, w)| *w == 1.0));
        assert_eq!(cfg.ablation.resolve().unwrap(), AblationFlags::default());
    }

    #[test]
    fn negative_alpha_is_rejected_naming_the_field() {
        let err = ExperimentConfig::from_toml(MINIMAL, &["loss.alpha1=-1".into()]).unwrap_err();
        match err {
            ConfigError::Invalid { field, .. } => assert_eq!(field, "loss.alpha1"),
            other => panic!("expected Invalid, got {other}"),
        }
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let text = format!("{MINIMAL}\n[loss]\nalpha5 = 2.0\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&text, &[]),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn presets_match_the_ablation_table() {
        let rows: [(&str, [bool; 5]); 7] = [
            ("source-only", [false, false, false, false, false]),
            ("model-A", [false, true, true, true, true]),
            ("model-B", [true, false, false, false, false]),
            ("model-C", [true, true, false, false, false]),
            ("model-D", [true, true, true, false, false]),
            ("model-E", [true, true, true, true, false]),
            ("full", [true, true, true, true, true]),
        ];
        for (name, [f, i, r, p, c]) in rows {
            let got = preset_ablation(name).unwrap();
            assert_eq!(
                (got.use_adv_f, got.use_adv_i, got.use_rec, got.use_per, got.use_cls_st),
                (f, i, r, p, c),
                "preset {name}"
            );
        }
        assert!(matches!(preset_ablation("model-Z"), Err(ConfigError::UnknownPreset(_))));
    }

    #[test]
    fn preset_override_via_set_flag_works() {
        let cfg =
            ExperimentConfig::from_toml(MINIMAL, &["ablation.preset=model-B".into()]).unwrap();
        let flags = cfg.ablation.resolve().unwrap();
        assert!(flags.use_adv_f);
        assert!(!flags.use_adv_i && !flags.use_rec && !flags.use_per && !flags.use_cls_st);
    }

    #[test]
    fn overrides_type_correctly_and_reject_malformed_specs() {
        let cfg = ExperimentConfig::from_toml(
            MINIMAL,
            &["trainer.t_max=50".into(), "data.augment_flip=false".into()],
        )
        .unwrap();
        assert_eq!(cfg.trainer.t_max, 50);
        assert!(!cfg.data.augment_flip);
        assert!(matches!(
            ExperimentConfig::from_toml(MINIMAL, &["no-equals-sign".into()]),
            Err(ConfigError::BadOverride(_))
        ));
    }

    #[test]
    fn recon_taps_must_union_texture_and_structure() {
        let text = format!(
            "{MINIMAL}\n[perceptual]\ntexture_taps = [[\"relu1_1\", 1.0]]\n\
             structure_taps = [[\"relu5_1\", 1.0]]\n\
             reconstruction_taps = [[\"relu1_1\", 1.0]]\n"
        );
        let err = ExperimentConfig::from_toml(&text, &[]).unwrap_err();
        match err {
            ConfigError::Invalid { field, .. } => {
                assert_eq!(field, "perceptual.reconstruction_taps")
            }
            other => panic!("expected Invalid, got {other}"),
        }
    }

    #[test]
    fn output_root_env_resolves_relative_dirs() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, &[]).unwrap();
        // Not set in the test environment by default: falls through.
        std::env::remove_var(OUTPUT_ROOT_ENV);
        assert_eq!(cfg.resolved_output_dir(), std::path::PathBuf::from("runs/default"));
        std::env::set_var(OUTPUT_ROOT_ENV, "/tmp/stsn-root");
        assert_eq!(
            cfg.resolved_output_dir(),
            std::path::PathBuf::from("/tmp/stsn-root/runs/default")
        );
        std::env::remove_var(OUTPUT_ROOT_ENV);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn serialized_configs_reparse_equal(
            a1 in 0.0f64..4.0,
            a4 in 0.0f64..2.0,
            t_max in 1u64..100_000,
            batch in 2usize..32,
            preset in prop::sample::select(vec![
                "source-only", "model-A", "model-B", "model-C", "model-D", "model-E", "full",
            ]),
        ) {
            let overrides = vec![
                format!("loss.alpha1={a1}"),
                format!("loss.alpha4={a4}"),
                format!("trainer.t_max={t_max}"),
                format!("data.batch_per_domain={batch}"),
                format!("ablation.preset={preset}"),
            ];
            let cfg = ExperimentConfig::from_toml(MINIMAL, &overrides).unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
            prop_assert_eq!(cfg, back);
        }
    }
}
