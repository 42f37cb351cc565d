//! Batch operator surface for the structure–texture separation networks:
//! subcommands to synthesize corpora, train, evaluate checkpoints, write
//! cross-domain transform grids, and export structure codes.
//!
//! Output is line-oriented `key=value` on standard out (machine-parsable)
//! with human-readable tables and progress on standard error. Exit codes
//! form a stable contract: 0 ok, 2 usage, 3 I/O, 4 numeric abort,
//! 5 checkpoint mismatch. Every subcommand is idempotent given identical
//! inputs and seed (byte-identical artifacts, timestamps excluded).

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use stsn::checkpoint::{self, CheckpointError};
use stsn::config::{ConfigError, DatasetSpec, ExperimentConfig, SynthTemplate};
use stsn::data::{
    load_folder_unlabeled, load_labeled, synth_glyph_corpus, write_folder_corpus, CorpusManifest,
    DataError, DegradationSpec, UnlabeledCorpus,
};
use stsn::eval::{
    aggregate_runs, evaluate, export_features, format_mean_std, EvalError, EvalResult,
};
use stsn::latent::Domain;
use stsn::tensor::Tensor;
use stsn::trainer::{fit, transform_images, write_image_grid, FitReport, TrainError, TrainState};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_CHECKPOINT: u8 = 5;

#[derive(Parser)]
#[command(
    name = "stsn",
    version,
    about = "Structure–texture separation networks: corpus synthesis, training, \
             evaluation, image transformation, and feature export",
    after_help = "Exit codes: 0 ok, 2 usage, 3 I/O, 4 non-finite loss abort, \
                  5 checkpoint mismatch.\nSet STSN_OUTPUT_ROOT to relocate \
                  relative output directories."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired clean/degraded glyph corpus on disk.
    Synth(SynthArgs),
    /// Train a model from a config file, writing artifacts and a manifest.
    Train(TrainArgs),
    /// Evaluate one or more checkpoints on the configured evaluation sets.
    Eval(EvalArgs),
    /// Write cross-domain transform grids for paired image folders.
    Transform(TransformArgs),
    /// Export structure codes (with a PCA quick look) for inspection.
    ExportFeatures(ExportFeaturesArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of glyph classes.
    #[arg(long)]
    classes: usize,
    /// Samples drawn per class.
    #[arg(long)]
    per_class: usize,
    /// Corpus seed; identical flags and seed reproduce the tree byte-for-byte.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory that receives clean/, degraded/, and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Template family: "glyphs" or "digits".
    #[arg(long, default_value = "glyphs")]
    template: String,
    /// Image side in pixels.
    #[arg(long, default_value_t = 32)]
    side: usize,
    /// TOML file overriding the default degradation recipe.
    #[arg(long)]
    degradation: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted-path config overrides, e.g. --set trainer.t_max=50.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Checkpoint to resume from.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Experiment config describing the architecture and evaluation sets.
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted-path config overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Checkpoints to evaluate; several (one per training seed) aggregate
    /// into a mean ± std row.
    #[arg(required = true)]
    checkpoints: Vec<PathBuf>,
    /// Expected number of per-seed checkpoints (guards aggregation).
    #[arg(long)]
    seeds: Option<usize>,
    /// Domains to evaluate.
    #[arg(long, default_value = "both", value_parser = ["target", "source", "both"])]
    domain: String,
    /// Results CSV path.
    #[arg(long, default_value = "eval-results.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    /// Checkpoint holding the trained networks.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Experiment config describing the architecture.
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted-path config overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Folder of source-domain images.
    #[arg(long)]
    source: PathBuf,
    /// Folder of target-domain images (same count as --source).
    #[arg(long)]
    target: PathBuf,
    /// Directory that receives the two grids.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportFeaturesArgs {
    /// Checkpoint holding the trained networks.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Experiment config describing the architecture and evaluation sets.
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted-path config overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output path for the binary feature dump.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV with the two-component PCA quick look.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// A caller mistake (bad flag value, inconsistent counts, bad config key):
/// reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(message.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Transform(a) => cmd_transform(a),
        Command::ExportFeatures(a) => cmd_export_features(a),
    }
}

/// Maps the typed error chain onto the documented exit-code contract.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::NonFinite { .. } => EXIT_NUMERIC,
                TrainError::Checkpoint(_) => EXIT_CHECKPOINT,
                TrainError::Config(_)
                | TrainError::BatchDomainMismatch
                | TrainError::AtBudget { .. }
                | TrainError::Optim(_) => EXIT_USAGE,
                TrainError::Eval(e) => eval_exit_code(e),
                TrainError::Data(e) => data_exit_code(e),
                TrainError::Io { .. } => EXIT_IO,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_USAGE;
        }
        if cause.downcast_ref::<CheckpointError>().is_some() {
            return EXIT_CHECKPOINT;
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return eval_exit_code(e);
        }
        if let Some(e) = cause.downcast_ref::<DataError>() {
            return data_exit_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    1
}

fn eval_exit_code(e: &EvalError) -> u8 {
    match e {
        EvalError::Dump(_) => EXIT_CHECKPOINT,
        _ => EXIT_USAGE,
    }
}

fn data_exit_code(e: &DataError) -> u8 {
    match e {
        // Parameter mistakes are the caller's; everything else is the disk's.
        DataError::BadParams(_) | DataError::BatchTooLarge { .. } => EXIT_USAGE,
        _ => EXIT_IO,
    }
}

// ---------------------------------------------------------------------------
// synth

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let template = parse_template(&a.template)?;
    let degradation = match &a.degradation {
        None => DegradationSpec::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
    };
    degradation.validate().map_err(usage)?;

    let (clean, degraded) =
        synth_glyph_corpus(template, a.classes, a.per_class, a.side, a.seed, &degradation)?;
    let manifest = |is_degraded: bool| CorpusManifest {
        template,
        classes: a.classes,
        per_class: a.per_class,
        side: a.side,
        seed: a.seed,
        degraded: is_degraded,
        degradation: degradation.clone(),
    };
    let clean_dir = a.out.join("clean");
    let degraded_dir = a.out.join("degraded");
    write_folder_corpus(&clean, &clean_dir, &manifest(false))?;
    write_folder_corpus(&degraded, &degraded_dir, &manifest(true))?;

    // Timestamp-free so a rerun reproduces the whole tree byte-for-byte.
    let top = serde_json::json!({
        "template": a.template,
        "classes": a.classes,
        "per_class": a.per_class,
        "side": a.side,
        "seed": a.seed,
        "count_per_tree": clean.len(),
        "trees": ["clean", "degraded"],
    });
    write_json_atomic(&a.out.join("manifest.json"), &top)?;

    println!("clean={}", clean_dir.display());
    println!("degraded={}", degraded_dir.display());
    println!("count_per_tree={}", clean.len());
    Ok(())
}

fn parse_template(name: &str) -> Result<SynthTemplate> {
    match name {
        "glyphs" => Ok(SynthTemplate::Glyphs),
        "digits" => Ok(SynthTemplate::Digits),
        other => Err(usage(format!("unknown template {other:?}; use glyphs or digits"))),
    }
}

// ---------------------------------------------------------------------------
// train

fn cmd_train(a: TrainArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config, &a.set)?;
    validate_dataset_paths(&config)?;
    let out = config.resolved_output_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let _lock = RunLock::acquire(&out)?;

    let started = now_rfc3339();
    let (_state, report) = fit::<f32>(&config, a.resume.as_deref())?;
    let finished = now_rfc3339();
    let manifest = write_run_manifest(&config, &out, &report, &started, &finished)?;

    println!("output_dir={}", out.display());
    println!("final_iteration={}", report.final_iteration);
    println!("final_target_accuracy={}", report.final_target.accuracy);
    println!("final_source_accuracy={}", report.final_source.accuracy);
    if let Some(best) = report.best {
        println!("best_iteration={}", best.iteration);
        println!("best_target_accuracy={}", best.accuracy);
    }
    println!("checkpoint={}", report.final_checkpoint.display());
    println!("manifest={}", manifest.display());
    Ok(())
}

/// Rejects configs whose file-backed datasets point at nothing, naming the
/// offending config key.
fn validate_dataset_paths(config: &ExperimentConfig) -> Result<()> {
    let mut specs = vec![
        ("data.source", &config.data.source),
        ("data.target", &config.data.target),
    ];
    if let Some(s) = &config.data.eval_target {
        specs.push(("data.eval_target", s));
    }
    if let Some(s) = &config.data.eval_source {
        specs.push(("data.eval_source", s));
    }
    for (key, spec) in specs {
        match spec {
            DatasetSpec::Idx { images, labels } => {
                for (field, path) in [("images", images), ("labels", labels)] {
                    if !Path::new(path).is_file() {
                        return Err(usage(format!("{key}.{field} = {path:?}: no such file")));
                    }
                }
            }
            DatasetSpec::Folder { root, .. } => {
                if !Path::new(root).is_dir() {
                    return Err(usage(format!("{key}.root = {root:?}: no such directory")));
                }
            }
            DatasetSpec::Synth { .. } => {}
        }
    }
    Ok(())
}

/// Exclusive-creation lock file so concurrent runs cannot share an output
/// directory; removed when the run ends (even on error).
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) => Err(anyhow::Error::new(e).context(format!(
                "another run may hold {}; remove it if no process is running",
                path.display()
            ))),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

/// The commit hash of the working tree, when a git checkout is available.
fn code_version() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    let hash = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!hash.is_empty()).then_some(hash)
}

/// Writes `manifest.json` atomically at run end; every artifact path it
/// names is verified to exist first.
fn write_run_manifest(
    config: &ExperimentConfig,
    out: &Path,
    report: &FitReport,
    started: &str,
    finished: &str,
) -> Result<PathBuf> {
    let mut artifacts = vec![report.metrics_path.clone(), report.eval_path.clone()];
    let mut entries: Vec<PathBuf> = fs::read_dir(out)
        .with_context(|| format!("listing {}", out.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            (name.starts_with("ckpt-") && name.ends_with(".bin"))
                || (name.starts_with("transforms-") && name.ends_with(".png"))
        })
        .collect();
    entries.sort();
    artifacts.extend(entries);
    for path in &artifacts {
        anyhow::ensure!(path.exists(), "manifest names a missing artifact: {}", path.display());
    }

    let digest = checkpoint::config_digest(&config.to_toml());
    let manifest = serde_json::json!({
        "config_digest": hex_string(&digest),
        "code_version": code_version(),
        "seed": config.seed,
        "started_at": started,
        "finished_at": finished,
        "final_iteration": report.final_iteration,
        "artifacts": artifacts.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let path = out.join("manifest.json");
    write_json_atomic(&path, &manifest)?;
    Ok(path)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json_atomic(path: &Path, value: &serde_json::Value) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut file = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("staging {}", path.display()))?;
    serde_json::to_writer_pretty(&mut file, value)
        .with_context(|| format!("serializing {}", path.display()))?;
    file.write_all(b"\n")?;
    file.persist(path)
        .with_context(|| format!("persisting {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config, &a.set)?;
    validate_dataset_paths(&config)?;
    if let Some(n) = a.seeds {
        if a.checkpoints.len() != n {
            return Err(usage(format!(
                "--seeds {n} expects {n} checkpoints, got {}",
                a.checkpoints.len()
            )));
        }
    }
    let domains: &[Domain] = match a.domain.as_str() {
        "target" => &[Domain::Target],
        "source" => &[Domain::Source],
        _ => &[Domain::Target, Domain::Source],
    };
    let (eval_source, eval_target) = eval_corpora(&config)?;

    let mut csv = csv::Writer::from_path(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    csv.write_record(["checkpoint", "domain", "accuracy"])?;
    eprintln!("{:<40} {:>8} {:>10}", "checkpoint", "domain", "accuracy");

    let mut by_domain: Vec<(Domain, Vec<EvalResult>)> =
        domains.iter().map(|&d| (d, Vec::new())).collect();
    for ckpt in &a.checkpoints {
        let (state, mismatch) = TrainState::<f32>::resume(&config, ckpt)?;
        if mismatch {
            eprintln!(
                "warning: {} was written under a different config",
                ckpt.display()
            );
        }
        for (domain, results) in by_domain.iter_mut() {
            let set = match domain {
                Domain::Target => &eval_target,
                Domain::Source => &eval_source,
            };
            let r = evaluate(&state.nets.e_g, &state.nets.c, set, *domain, config.seed)?;
            let name = domain_name(*domain);
            println!(
                "checkpoint={} domain={name} accuracy={}",
                ckpt.display(),
                r.accuracy
            );
            eprintln!("{:<40} {:>8} {:>10.4}", ckpt.display(), name, r.accuracy);
            csv.write_record([
                ckpt.display().to_string(),
                name.to_string(),
                r.accuracy.to_string(),
            ])?;
            results.push(r);
        }
    }

    if a.checkpoints.len() >= 2 {
        for (domain, results) in &by_domain {
            let stats = aggregate_runs(results)?;
            let name = domain_name(*domain);
            let pretty = format_mean_std(stats);
            println!("{name}_mean_std={pretty}");
            eprintln!(
                "{:<40} {:>8} {:>10}",
                format!("aggregate({})", results.len()),
                name,
                pretty
            );
            csv.write_record([
                format!("aggregate({})", results.len()),
                name.to_string(),
                pretty,
            ])?;
        }
    }
    csv.flush()?;
    println!("results={}", a.out.display());
    Ok(())
}

fn domain_name(domain: Domain) -> &'static str {
    match domain {
        Domain::Target => "target",
        Domain::Source => "source",
    }
}

/// The configured evaluation corpora, falling back to the training specs
/// (labels are required here, so the target spec must carry them).
fn eval_corpora(config: &ExperimentConfig) -> Result<(stsn::data::LabeledCorpus, stsn::data::LabeledCorpus)> {
    let side = config.data.image_side;
    let source_spec = config.data.eval_source.as_ref().unwrap_or(&config.data.source);
    let target_spec = config.data.eval_target.as_ref().unwrap_or(&config.data.target);
    let source = load_labeled(source_spec, side)?;
    let target = load_labeled(target_spec, side)?;
    Ok((source, target))
}

// ---------------------------------------------------------------------------
// transform

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config, &a.set)?;
    let side = config.data.image_side;
    let source = load_folder_unlabeled(&a.source, side)?;
    let target = load_folder_unlabeled(&a.target, side)?;
    if source.len() != target.len() {
        return Err(usage(format!(
            "--source has {} images but --target has {}; transforms are paired",
            source.len(),
            target.len()
        )));
    }
    let (state, mismatch) = TrainState::<f32>::resume(&config, &a.checkpoint)?;
    if mismatch {
        eprintln!(
            "warning: {} was written under a different config",
            a.checkpoint.display()
        );
    }

    let x_s = corpus_tensor(&source);
    let x_t = corpus_tensor(&target);
    let (x_st, x_ts) = transform_images(&state.nets, x_s.clone(), x_t.clone());

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let rows = source.len();
    let source_grid = a.out.join("transforms-source.png");
    let target_grid = a.out.join("transforms-target.png");
    write_image_grid(&source_grid, &[&x_s, &x_st], rows)?;
    write_image_grid(&target_grid, &[&x_t, &x_ts], rows)?;

    println!("rows={rows}");
    println!("source_grid={}", source_grid.display());
    println!("target_grid={}", target_grid.display());
    Ok(())
}

fn corpus_tensor(corpus: &UnlabeledCorpus) -> Tensor<f32> {
    let side = corpus.side();
    let mut pixels = Vec::with_capacity(corpus.len() * side * side * 3);
    for i in 0..corpus.len() {
        pixels.extend_from_slice(corpus.image(i));
    }
    Tensor::from_vec(&[corpus.len(), side, side, 3], pixels)
}

// ---------------------------------------------------------------------------
// export-features

fn cmd_export_features(a: ExportFeaturesArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config, &a.set)?;
    validate_dataset_paths(&config)?;
    let (state, mismatch) = TrainState::<f32>::resume(&config, &a.checkpoint)?;
    if mismatch {
        eprintln!(
            "warning: {} was written under a different config",
            a.checkpoint.display()
        );
    }
    let (eval_source, eval_target) = eval_corpora(&config)?;
    let dump = export_features(
        &state.nets.e_g,
        &[(&eval_source, Domain::Source), (&eval_target, Domain::Target)],
        &a.out,
    )?;
    if let Some(csv_path) = &a.csv {
        dump.write_quick_look_csv(csv_path)?;
        println!("quick_look={}", csv_path.display());
    }
    println!("features={}", a.out.display());
    println!("rows={}", dump.n);
    println!("code_width={}", dump.c_g);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_contract() {
        let cases: Vec<(anyhow::Error, u8)> = vec![
            (usage("bad flag"), EXIT_USAGE),
            (
                anyhow::Error::new(TrainError::NonFinite { term: "per", iteration: 3 }),
                EXIT_NUMERIC,
            ),
            (
                anyhow::Error::new(TrainError::Io {
                    path: "x".into(),
                    source: std::io::Error::other("disk"),
                }),
                EXIT_IO,
            ),
            (
                anyhow::Error::new(CheckpointError::Corrupt { path: "x".into(), reason: "truncated".into() }),
                EXIT_CHECKPOINT,
            ),
            (
                anyhow::Error::new(DataError::BadParams("need 2 classes".into())),
                EXIT_USAGE,
            ),
            (
                anyhow::Error::new(DataError::EmptyCorpus { path: "x".into() }),
                EXIT_IO,
            ),
            (anyhow::anyhow!("unclassified"), 1),
        ];
        for (err, want) in cases {
            assert_eq!(exit_code_for(&err), want, "{err}");
        }
    }

    #[test]
    fn wrapped_causes_keep_their_exit_code() {
        let inner = anyhow::Error::new(CheckpointError::Corrupt { path: "x".into(), reason: "truncated".into() });
        let wrapped = inner.context("while evaluating");
        assert_eq!(exit_code_for(&wrapped), EXIT_CHECKPOINT);
    }

    #[test]
    fn templates_parse_and_reject() {
        assert_eq!(parse_template("glyphs").unwrap(), SynthTemplate::Glyphs);
        assert_eq!(parse_template("digits").unwrap(), SynthTemplate::Digits);
        let err = parse_template("emoji").unwrap_err();
        assert_eq!(exit_code_for(&err), EXIT_USAGE);
    }

    #[test]
    fn hex_digest_is_lowercase_and_sized() {
        let s = hex_string(&[0u8, 255, 16]);
        assert_eq!(s, "00ff10");
    }
}
