//! The four-phase update loop end to end: seeded initialization, per-phase
//! optimization (discriminators → generator → encoders → classifier),
//! polynomial learning-rate schedules, checkpointing, and metrics logging.
//!
//! Each phase builds a fresh forward graph, so no phase consumes activations
//! that an earlier parameter update invalidated. Within the encoder phase the
//! texture-encoder and structure-encoder objectives share one forward pass
//! and differentiate it twice, both at the phase-entry parameter point.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError, Container, RngState};
use crate::config::{
    AblationFlags, ConfigError, ExperimentConfig, LossWeights, PerceptualSpec, ScheduleSpec,
};
use crate::data::{
    batch_stream, load_labeled, load_unlabeled, AugmentFlags, DataError, ImageBatch,
};
use crate::eval::{evaluate, EvalError, EvalResult};
use crate::graph::{Gradients, Graph, Param, Var};
use crate::latent::{assemble, transform_quadruple, Domain};
use crate::losses::{
    adv_f_discriminator, adv_f_encoder, adv_i_discriminator, adv_i_generator, cross_entropy,
    perceptual_and_reconstruction, total_loss, LossReport,
};
use crate::networks::Networks;
use crate::optim::{lr_at, GroupOptimizer, OptimError};
use crate::tensor::{Element, Tensor};

/// Samples shown per transform grid (rows), capped by the batch size.
const GRID_ROWS: usize = 8;

#[derive(Debug, Error)]
pub enum TrainError {
    /// The loss watchdog: a term left the finite range this iteration.
    #[error("loss term {term:?} became non-finite at iteration {iteration}")]
    NonFinite { term: &'static str, iteration: u64 },
    /// Batches arrived swapped or mislabeled.
    #[error("expected a labeled source batch and an unlabeled target batch")]
    BatchDomainMismatch,
    /// The iteration budget is already spent.
    #[error("training is already at its budget of {t_max} iterations")]
    AtBudget { t_max: u64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

/// Best-so-far target accuracy and where it happened.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BestMetric {
    pub iteration: u64,
    pub accuracy: f64,
}

struct Schedules {
    backbone: ScheduleSpec,
    discriminators: ScheduleSpec,
    generators: ScheduleSpec,
}

struct OptimizerBank<T> {
    backbone: GroupOptimizer<T>,
    discriminators: GroupOptimizer<T>,
    generators: GroupOptimizer<T>,
}

/// Derives the named random streams from the experiment seed (network
/// initialization has its own derivation inside the network builder).
fn stream_seeds(seed: u64) -> (u64, u64) {
    // Salted so the stream seeds differ from the network-init draws.
    let mut master = ChaCha12Rng::seed_from_u64(seed ^ 0x5354_534e_5f52_4e47);
    (master.gen(), master.gen())
}

/// Everything the update loop mutates: networks, optimizer state, random
/// streams, the iteration counter, and the best-metric tracker.
pub struct TrainState<T: Element> {
    pub nets: Networks<T>,
    pub iteration: u64,
    pub best: Option<BestMetric>,
    t_max: u64,
    flags: AblationFlags,
    weights: LossWeights,
    perceptual: PerceptualSpec,
    schedules: Schedules,
    optimizers: OptimizerBank<T>,
    dropout_rng: ChaCha12Rng,
    data_seed: u64,
}

impl<T: Element> TrainState<T> {
    /// Fresh state at iteration 0; identical configs yield bit-identical
    /// parameters and stream positions.
    pub fn new(config: &ExperimentConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let flags = config.ablation.resolve()?;
        let nets = Networks::build(&config.network_settings());
        let schedules = {
            let m = config.schedules();
            Schedules {
                backbone: m["backbone"].clone(),
                discriminators: m["discriminators"].clone(),
                generators: m["generators"].clone(),
            }
        };
        let optimizers = OptimizerBank {
            backbone: GroupOptimizer::from_spec(&config.optim.backbone),
            discriminators: GroupOptimizer::from_spec(&config.optim.discriminators),
            generators: GroupOptimizer::from_spec(&config.optim.generators),
        };
        let (data_seed, dropout_seed) = stream_seeds(config.seed);
        Ok(Self {
            nets,
            iteration: 0,
            best: None,
            t_max: config.trainer.t_max,
            flags,
            weights: config.loss.clone(),
            perceptual: config.perceptual.clone(),
            schedules,
            optimizers,
            dropout_rng: ChaCha12Rng::seed_from_u64(dropout_seed),
            data_seed,
        })
    }

    /// Seed of the batch stream this run consumes.
    pub fn data_seed(&self) -> u64 {
        self.data_seed
    }

    pub fn flags(&self) -> AblationFlags {
        self.flags
    }

    /// One full iteration: the four-phase update in Algorithm order.
    ///
    /// Phase 1 trains the discriminators on detached codes and transforms;
    /// phase 2 the generator; phase 3 the texture encoders (α-terms only) and
    /// the structure encoder (α-terms plus classification); phase 4 the
    /// classifier. Reported per-term scalars come from the phase that first
    /// computes them. Disabled terms stay exactly 0 and their uniquely
    /// associated networks are never even forwarded.
    pub fn train_step(
        &mut self,
        src: &ImageBatch,
        tgt: &ImageBatch,
    ) -> Result<LossReport, TrainError> {
        self.train_step_observed(src, tgt, &mut |_, _| {})
    }

    /// [`train_step`] with a probe called after each of the four phases
    /// (whether or not the phase's flags enabled any work), for tests that
    /// verify per-phase update scoping.
    pub fn train_step_observed(
        &mut self,
        src: &ImageBatch,
        tgt: &ImageBatch,
        after_phase: &mut dyn FnMut(usize, &Networks<T>),
    ) -> Result<LossReport, TrainError> {
        if self.iteration >= self.t_max {
            return Err(TrainError::AtBudget { t_max: self.t_max });
        }
        if src.domain != Domain::Source || tgt.domain != Domain::Target {
            return Err(TrainError::BatchDomainMismatch);
        }
        let y_s = src.labels.clone().ok_or(TrainError::BatchDomainMismatch)?;

        let t = self.iteration;
        let lr_b = lr_at(&self.schedules.backbone, t)?;
        let lr_d = lr_at(&self.schedules.discriminators, t)?;
        let lr_g = lr_at(&self.schedules.generators, t)?;

        let f = self.flags;
        let w = self.weights.clone();
        let mut report = LossReport::default();
        let guard = |term: &'static str, v: f64| -> Result<f64, TrainError> {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TrainError::NonFinite { term, iteration: t })
            }
        };

        // ---- Phase 1: discriminators, on detached inputs, unscaled. ----
        if f.use_adv_f || f.use_adv_i {
            let mut tape = Graph::new(true);
            let x_s = tape.constant(src.tensor::<T>());
            let x_t = tape.constant(tgt.tensor::<T>());
            let sc_s = self.nets.e_g.forward(&mut tape, x_s);
            let sc_t = self.nets.e_g.forward(&mut tape, x_t);

            let mut objective: Option<Var> = None;
            if f.use_adv_f {
                let f_s = tape.detach(sc_s.pooled);
                let f_t = tape.detach(sc_t.pooled);
                let log_lik = adv_f_discriminator(
                    &mut tape,
                    &self.nets.d_f,
                    f_s,
                    f_t,
                    &mut self.dropout_rng,
                );
                report.adv_f_d = guard("adv_f_d", tape.value(log_lik).scalar().to_f64())?;
                // The discriminator maximizes the log-likelihood.
                objective = Some(tape.neg(log_lik));
            }
            if f.use_adv_i {
                let tex_s = self.nets.e_n_s.forward(&mut tape, x_s);
                let tex_t = self.nets.e_n_t.forward(&mut tape, x_t);
                let z_st = assemble(&mut tape, sc_s.map, tex_t, Domain::Target);
                let z_ts = assemble(&mut tape, sc_t.map, tex_s, Domain::Source);
                let x_st = self.nets.g.forward(&mut tape, z_st.assembled);
                let x_ts = self.nets.g.forward(&mut tape, z_ts.assembled);
                let fake_t = tape.detach(x_st);
                let fake_s = tape.detach(x_ts);
                let l_t = adv_i_discriminator(&mut tape, &self.nets.d_i_t, x_t, fake_t);
                let l_s = adv_i_discriminator(&mut tape, &self.nets.d_i_s, x_s, fake_s);
                let sum = tape.add(l_t, l_s);
                report.adv_i_d = guard("adv_i_d", tape.value(sum).scalar().to_f64())?;
                objective = Some(match objective {
                    Some(o) => tape.add(o, sum),
                    None => sum,
                });
            }

            let objective = objective.expect("an adversarial flag is on");
            let grads = tape.backward(objective);
            let mut params = self.nets.params_d_f();
            params.extend(self.nets.params_d_i_t());
            params.extend(self.nets.params_d_i_s());
            self.optimizers.discriminators.step(&params, &grads, lr_d);
        }
        after_phase(1, &self.nets);

        // ---- Phase 2: generator, by the α₂/α₃/α₄ terms. ----
        if f.use_adv_i || f.use_per || f.use_rec {
            let mut tape = Graph::new(true);
            let x_s = tape.constant(src.tensor::<T>());
            let x_t = tape.constant(tgt.tensor::<T>());
            let q = transform_quadruple(&mut tape, &self.nets, x_s, x_t);

            let mut objective: Option<Var> = None;
            let mut push = |tape: &mut Graph<T>, term: Var, alpha: f64| {
                let scaled = tape.scale(term, T::from_f64(alpha));
                objective = Some(match objective {
                    Some(o) => tape.add(o, scaled),
                    None => scaled,
                });
            };
            if f.use_adv_i {
                let a_t = adv_i_generator(&mut tape, &self.nets.d_i_t, q.x_st);
                let a_s = adv_i_generator(&mut tape, &self.nets.d_i_s, q.x_ts);
                let sum = tape.add(a_t, a_s);
                report.adv_i_g = guard("adv_i_g", tape.value(sum).scalar().to_f64())?;
                push(&mut tape, sum, w.alpha2);
            }
            let (per, rec) = perceptual_and_reconstruction(
                &mut tape,
                &self.nets.phi,
                &self.perceptual,
                x_s,
                x_t,
                q.x_ss,
                q.x_tt,
                q.x_st,
                q.x_ts,
                f.use_per,
                f.use_rec,
            );
            if let Some(p) = per {
                report.per = guard("per", tape.value(p).scalar().to_f64())?;
                push(&mut tape, p, w.alpha3);
            }
            if let Some(r) = rec {
                report.rec = guard("rec", tape.value(r).scalar().to_f64())?;
                push(&mut tape, r, w.alpha4);
            }

            let objective = objective.expect("a generator-side flag is on");
            let grads = tape.backward(objective);
            self.optimizers.generators.step(&self.nets.params_g(), &grads, lr_g);
        }
        after_phase(2, &self.nets);

        // ---- Phase 3: texture encoders (α-terms) and structure encoder
        // (α-terms + classification), one forward, two backwards. ----
        {
            let mut tape = Graph::new(true);
            let x_s = tape.constant(src.tensor::<T>());
            let needs_quad = f.use_adv_i || f.use_per || f.use_rec || f.use_cls_st;

            let (code_s, code_t, quad) = if needs_quad {
                let x_t = tape.constant(tgt.tensor::<T>());
                let q = transform_quadruple(&mut tape, &self.nets, x_s, x_t);
                (q.codes.structure_s, Some(q.codes.structure_t), Some((q, x_t)))
            } else if f.use_adv_f {
                let x_t = tape.constant(tgt.tensor::<T>());
                let cs = self.nets.e_g.forward(&mut tape, x_s);
                let ct = self.nets.e_g.forward(&mut tape, x_t);
                (cs, Some(ct), None)
            } else {
                (self.nets.e_g.forward(&mut tape, x_s), None, None)
            };

            let logits_s = self.nets.c.forward(&mut tape, code_s.pooled);
            let ce_s = cross_entropy(&mut tape, logits_s, &y_s);
            report.cls_s = guard("cls_s", tape.value(ce_s).scalar().to_f64())?;

            // The shared α₂/α₃/α₄ objective of the texture-encoder update.
            let mut texture_objective: Option<Var> = None;
            let mut push = |tape: &mut Graph<T>, term: Var, alpha: f64| {
                let scaled = tape.scale(term, T::from_f64(alpha));
                texture_objective = Some(match texture_objective {
                    Some(o) => tape.add(o, scaled),
                    None => scaled,
                });
            };
            let mut ce_st: Option<Var> = None;
            if let Some((q, x_t)) = &quad {
                if f.use_adv_i {
                    let a_t = adv_i_generator(&mut tape, &self.nets.d_i_t, q.x_st);
                    let a_s = adv_i_generator(&mut tape, &self.nets.d_i_s, q.x_ts);
                    let sum = tape.add(a_t, a_s);
                    push(&mut tape, sum, w.alpha2);
                }
                let (per, rec) = perceptual_and_reconstruction(
                    &mut tape,
                    &self.nets.phi,
                    &self.perceptual,
                    x_s,
                    *x_t,
                    q.x_ss,
                    q.x_tt,
                    q.x_st,
                    q.x_ts,
                    f.use_per,
                    f.use_rec,
                );
                if let Some(p) = per {
                    push(&mut tape, p, w.alpha3);
                }
                if let Some(r) = rec {
                    push(&mut tape, r, w.alpha4);
                }
                if f.use_cls_st {
                    let code_st = self.nets.e_g.forward(&mut tape, q.x_st);
                    let logits_st = self.nets.c.forward(&mut tape, code_st.pooled);
                    let ce = cross_entropy(&mut tape, logits_st, &y_s);
                    report.cls_st = guard("cls_st", tape.value(ce).scalar().to_f64())?;
                    ce_st = Some(ce);
                }
            }

            if let Some(objective) = texture_objective {
                let grads = tape.backward(objective);
                let mut params = self.nets.params_e_n_s();
                params.extend(self.nets.params_e_n_t());
                self.optimizers.generators.step(&params, &grads, lr_g);
            }

            // Structure-encoder objective: everything plus classification.
            let mut eg_objective = ce_s;
            if let Some(ce) = ce_st {
                eg_objective = tape.add(eg_objective, ce);
            }
            if let Some(o) = texture_objective {
                eg_objective = tape.add(eg_objective, o);
            }
            if f.use_adv_f {
                let code_t = code_t.expect("target codes exist when the feature loss is on");
                let adv = adv_f_encoder(
                    &mut tape,
                    &self.nets.d_f,
                    code_s.pooled,
                    code_t.pooled,
                    &mut self.dropout_rng,
                );
                report.adv_f_e = guard("adv_f_e", tape.value(adv).scalar().to_f64())?;
                let scaled = tape.scale(adv, T::from_f64(w.alpha1));
                eg_objective = tape.add(eg_objective, scaled);
            }
            let grads = tape.backward(eg_objective);
            self.optimizers.backbone.step(&self.nets.params_e_g(), &grads, lr_b);
        }
        after_phase(3, &self.nets);

        // ---- Phase 4: classifier, by the classification terms only. ----
        {
            let mut tape = Graph::new(true);
            let x_s = tape.constant(src.tensor::<T>());
            let code_s = self.nets.e_g.forward(&mut tape, x_s);
            let logits_s = self.nets.c.forward(&mut tape, code_s.pooled);
            let mut objective = cross_entropy(&mut tape, logits_s, &y_s);
            guard("cls_s", tape.value(objective).scalar().to_f64())?;
            if f.use_cls_st {
                let x_t = tape.constant(tgt.tensor::<T>());
                let tex_t = self.nets.e_n_t.forward(&mut tape, x_t);
                let z_st = assemble(&mut tape, code_s.map, tex_t, Domain::Target);
                let x_st = self.nets.g.forward(&mut tape, z_st.assembled);
                let code_st = self.nets.e_g.forward(&mut tape, x_st);
                let logits_st = self.nets.c.forward(&mut tape, code_st.pooled);
                let ce_st = cross_entropy(&mut tape, logits_st, &y_s);
                guard("cls_st", tape.value(ce_st).scalar().to_f64())?;
                objective = tape.add(objective, ce_st);
            }
            let grads = tape.backward(objective);
            self.optimizers.backbone.step(&self.nets.params_c(), &grads, lr_b);
        }
        after_phase(4, &self.nets);

        self.iteration += 1;
        report = total_loss(report, &w, &f);
        if let Some(term) = report.first_non_finite() {
            return Err(TrainError::NonFinite { term, iteration: t });
        }
        Ok(report)
    }

    /// Writes the full training state (parameters, buffers, optimizer state,
    /// random streams, iteration, best tracker) as one container file.
    pub fn save_checkpoint(&self, path: &Path, config_digest: [u8; 32]) -> Result<(), TrainError> {
        let mut arrays = checkpoint::snapshot_params(&self.nets.all_persistent());
        for (prefix, opt) in [
            ("backbone", &self.optimizers.backbone),
            ("discriminators", &self.optimizers.discriminators),
            ("generators", &self.optimizers.generators),
        ] {
            for (name, t) in opt.export_state() {
                arrays.push((format!("opt.{prefix}.{name}"), t));
            }
        }
        let (best_it, best_acc) = match self.best {
            Some(b) => (b.iteration as f64, b.accuracy),
            None => (-1.0, -1.0),
        };
        arrays.push(("meta.best_iteration".into(), Tensor::scalar_tensor(T::from_f64(best_it))));
        arrays.push(("meta.best_accuracy".into(), Tensor::scalar_tensor(T::from_f64(best_acc))));

        let container = Container {
            config_digest,
            iteration: self.iteration,
            rng_states: vec![("dropout".into(), RngState::capture(&self.dropout_rng))],
            arrays,
        };
        checkpoint::save(&container, path)?;
        Ok(())
    }

    /// Rebuilds state from a config and a checkpoint. Returns the state and
    /// whether the stored config digest disagrees with this config (the
    /// caller should warn; a zero digest in weights-only files never
    /// mismatches). The batch stream is *not* part of the file: callers
    /// replay it to `iteration` (the loop in `fit` does).
    pub fn resume(
        config: &ExperimentConfig,
        path: &Path,
    ) -> Result<(Self, bool), TrainError> {
        let mut state = Self::new(config)?;
        let container: Container<T> = checkpoint::load(path)?;
        let digest = checkpoint::config_digest(&config.to_toml());
        let mismatch = container.digest_mismatch(&digest);

        let mut params = Vec::new();
        let mut opt_b = Vec::new();
        let mut opt_d = Vec::new();
        let mut opt_g = Vec::new();
        let mut best_it = -1.0f64;
        let mut best_acc = -1.0f64;
        for (name, tensor) in container.arrays {
            if let Some(rest) = name.strip_prefix("opt.backbone.") {
                opt_b.push((rest.to_string(), tensor));
            } else if let Some(rest) = name.strip_prefix("opt.discriminators.") {
                opt_d.push((rest.to_string(), tensor));
            } else if let Some(rest) = name.strip_prefix("opt.generators.") {
                opt_g.push((rest.to_string(), tensor));
            } else if name == "meta.best_iteration" {
                best_it = tensor.scalar().to_f64();
            } else if name == "meta.best_accuracy" {
                best_acc = tensor.scalar().to_f64();
            } else {
                params.push((name, tensor));
            }
        }
        checkpoint::apply_arrays(&params, &state.nets.all_persistent())?;
        state.optimizers.backbone.import_state(&opt_b);
        state.optimizers.discriminators.import_state(&opt_d);
        state.optimizers.generators.import_state(&opt_g);
        for (name, rng) in &container.rng_states {
            if name == "dropout" {
                state.dropout_rng = rng.restore();
            }
        }
        state.iteration = container.iteration;
        state.best = (best_it >= 0.0)
            .then_some(BestMetric { iteration: best_it as u64, accuracy: best_acc });
        Ok((state, mismatch))
    }
}

/// Paths and final numbers produced by a completed [`fit`] run.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub final_iteration: u64,
    pub final_target: EvalResult,
    pub final_source: EvalResult,
    pub best: Option<BestMetric>,
    pub metrics_path: PathBuf,
    pub eval_path: PathBuf,
    pub final_checkpoint: PathBuf,
}

/// Trains for the configured budget with periodic evaluation, checkpointing
/// (cadence + best-target-accuracy + an unconditional final file), metrics
/// CSV flushing, and transform grids at checkpoints.
pub fn fit<T: Element>(
    config: &ExperimentConfig,
    resume_from: Option<&Path>,
) -> Result<(TrainState<T>, FitReport), TrainError> {
    config.validate()?;
    let out = config.resolved_output_dir();
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let digest = checkpoint::config_digest(&config.to_toml());

    let mut state: TrainState<T> = match resume_from {
        None => TrainState::new(config)?,
        Some(path) => {
            let (state, mismatch) = TrainState::resume(config, path)?;
            if mismatch {
                eprintln!(
                    "warning: checkpoint {} was written under a different config",
                    path.display()
                );
            }
            state
        }
    };

    let side = config.data.image_side;
    let source = load_labeled(&config.data.source, side)?;
    let target = load_unlabeled(&config.data.target, side)?;
    let eval_target_spec = config.data.eval_target.as_ref().unwrap_or(&config.data.target);
    let eval_source_spec = config.data.eval_source.as_ref().unwrap_or(&config.data.source);
    let eval_target = load_labeled(eval_target_spec, side)?;
    let eval_source = load_labeled(eval_source_spec, side)?;

    let augment =
        AugmentFlags { crop: config.data.augment_crop, flip: config.data.augment_flip };
    let mut stream = batch_stream(
        &source,
        &target,
        config.data.batch_per_domain,
        state.data_seed(),
        augment,
    )?;
    // The stream is not checkpointed; a resumed run replays the consumed
    // prefix, which is exactly as deterministic as the original run.
    for _ in 0..state.iteration {
        let _ = stream.next();
    }

    let metrics_path = out.join("metrics.csv");
    let eval_path = out.join("eval.csv");
    let resuming = resume_from.is_some() && state.iteration > 0;
    let mut metrics = csv_writer(&metrics_path, resuming, &metrics_header())?;
    let mut evals = csv_writer(&eval_path, resuming, &["iteration", "domain", "accuracy"])?;

    let t_max = config.trainer.t_max;
    let mut last_eval: Option<(EvalResult, EvalResult)> = None;
    while state.iteration < t_max {
        let (batch_s, batch_t) = stream.next().expect("the batch stream is infinite");
        let report = state.train_step(&batch_s, &batch_t)?;
        let it = state.iteration;

        if it % config.trainer.log_every == 0 || it == t_max {
            write_metrics_row(&mut metrics, &metrics_path, it, &report, &state.schedules)?;
        }

        if it % config.trainer.eval_every == 0 || it == t_max {
            let r_t = evaluate(&state.nets.e_g, &state.nets.c, &eval_target, Domain::Target, config.seed)?;
            let r_s = evaluate(&state.nets.e_g, &state.nets.c, &eval_source, Domain::Source, config.seed)?;
            for r in [&r_t, &r_s] {
                let domain = if r.domain == Domain::Target { "target" } else { "source" };
                write_row(&mut evals, &eval_path, &[it.to_string(), domain.into(), r.accuracy.to_string()])?;
            }
            eprintln!(
                "iter {it}/{t_max}  total={:.4}  target_acc={:.4}  source_acc={:.4}",
                report.total, r_t.accuracy, r_s.accuracy
            );
            if state.best.map_or(true, |b| r_t.accuracy > b.accuracy) {
                state.best = Some(BestMetric { iteration: it, accuracy: r_t.accuracy });
                state.save_checkpoint(&out.join("ckpt-best.bin"), digest)?;
            }
            last_eval = Some((r_t, r_s));
        }

        if it % config.trainer.checkpoint_every == 0 {
            state.save_checkpoint(&out.join(format!("ckpt-{it:07}.bin")), digest)?;
            write_transform_grids(&state, &batch_s, &batch_t, &out, it)?;
        } else if it == t_max {
            write_transform_grids(&state, &batch_s, &batch_t, &out, it)?;
        }
    }

    let final_checkpoint = out.join("ckpt-final.bin");
    state.save_checkpoint(&final_checkpoint, digest)?;
    let (final_target, final_source) = last_eval.expect("the final iteration always evaluates");
    let report = FitReport {
        final_iteration: state.iteration,
        final_target,
        final_source,
        best: state.best,
        metrics_path,
        eval_path,
        final_checkpoint,
    };
    Ok((state, report))
}

fn metrics_header() -> Vec<&'static str> {
    let mut h = vec!["iteration"];
    h.extend(LossReport::CSV_COLUMNS);
    h.extend(["lr_backbone", "lr_discriminators", "lr_generators"]);
    h
}

/// Opens a CSV writer, appending without a header when resuming into an
/// existing file.
fn csv_writer(
    path: &Path,
    resuming: bool,
    header: &[&str],
) -> Result<csv::Writer<File>, TrainError> {
    let append = resuming && path.exists();
    let file = if append {
        std::fs::OpenOptions::new().append(true).open(path).map_err(io_err(path))?
    } else {
        File::create(path).map_err(io_err(path))?
    };
    let mut w = csv::Writer::from_writer(file);
    if !append {
        w.write_record(header).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
    }
    Ok(w)
}

fn write_row(
    w: &mut csv::Writer<File>,
    path: &Path,
    record: &[String],
) -> Result<(), TrainError> {
    let io = |e: csv::Error| TrainError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record(record).map_err(io)?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_metrics_row(
    w: &mut csv::Writer<File>,
    path: &Path,
    iteration: u64,
    report: &LossReport,
    schedules: &Schedules,
) -> Result<(), TrainError> {
    // Rates that were in effect for the step that just finished.
    let t = iteration - 1;
    let mut record = vec![iteration.to_string()];
    record.extend(report.csv_values().iter().map(|v| v.to_string()));
    for spec in [&schedules.backbone, &schedules.discriminators, &schedules.generators] {
        record.push(lr_at(spec, t).expect("t < t_max by construction").to_string());
    }
    write_row(w, path, &record)
}

/// Decodes the quadruple in evaluation mode and writes one grid per domain,
/// each row laid out (input | reconstruction | cross-domain transform).
fn write_transform_grids<T: Element>(
    state: &TrainState<T>,
    src: &ImageBatch,
    tgt: &ImageBatch,
    out: &Path,
    iteration: u64,
) -> Result<(), TrainError> {
    let rows = src.batch.min(GRID_ROWS);
    let mut tape = Graph::new(false);
    let x_s = tape.constant(src.tensor::<T>());
    let x_t = tape.constant(tgt.tensor::<T>());
    let q = transform_quadruple(&mut tape, &state.nets, x_s, x_t);
    write_image_grid(
        &out.join(format!("transforms-source-{iteration:07}.png")),
        &[tape.value(x_s), tape.value(q.x_ss), tape.value(q.x_st)],
        rows,
    )?;
    write_image_grid(
        &out.join(format!("transforms-target-{iteration:07}.png")),
        &[tape.value(x_t), tape.value(q.x_tt), tape.value(q.x_ts)],
        rows,
    )
}

/// Evaluation-mode cross-domain transforms for visualization: given equal
/// counts of source and target pixels (b, side, side, 3) in [−1, 1], returns
/// the target-textured source images and source-textured target images.
pub fn transform_images<T: Element>(
    nets: &Networks<T>,
    src: Tensor<T>,
    tgt: Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let mut tape = Graph::new(false);
    let x_s = tape.constant(src);
    let x_t = tape.constant(tgt);
    let q = transform_quadruple(&mut tape, nets, x_s, x_t);
    (tape.value(q.x_st).clone(), tape.value(q.x_ts).clone())
}

/// Writes a lossless raster laying the given (b, side, side, 3) tensors out
/// as columns, one row per sample (the first `rows`), pixels mapped from
/// [−1, 1] to bytes.
pub fn write_image_grid<T: Element>(
    path: &Path,
    columns: &[&Tensor<T>],
    rows: usize,
) -> Result<(), TrainError> {
    let shape = columns[0].shape().to_vec();
    let side = shape[1];
    assert!(rows >= 1 && rows <= shape[0], "rows must address existing samples");
    let (width, height) = (columns.len() * side, rows * side);
    let mut bytes = vec![0u8; width * height * 3];
    for (col, tensor) in columns.iter().enumerate() {
        assert_eq!(tensor.shape(), &shape[..], "grid columns must share a shape");
        let data = tensor.data();
        for r in 0..rows {
            for y in 0..side {
                for x in 0..side {
                    for ch in 0..3 {
                        let v = data[((r * side + y) * side + x) * 3 + ch].to_f64();
                        let byte = (((v + 1.0) * 0.5 * 255.0).round()).clamp(0.0, 255.0) as u8;
                        let gx = col * side + x;
                        let gy = r * side + y;
                        bytes[(gy * width + gx) * 3 + ch] = byte;
                    }
                }
            }
        }
    }
    let img: image::RgbImage =
        image::ImageBuffer::from_vec(width as u32, height as u32, bytes).expect("sized above");
    img.save(path).map_err(|e| TrainError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

/// Convenience for tests and property checks: names and values of every
/// *trainable* parameter (optimizer-owned state; excludes normalization
/// buffers, which train-mode forwards update as bookkeeping).
pub fn trainable_snapshot<T: Element>(params: &[Param<T>]) -> Vec<(String, Tensor<T>)> {
    params
        .iter()
        .filter(|p| p.trainable())
        .map(|p| (p.name(), p.value()))
        .collect()
}

/// True when two snapshots are bit-identical (same names, same values).
pub fn snapshots_equal<T: Element>(
    a: &[(String, Tensor<T>)],
    b: &[(String, Tensor<T>)],
) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|((na, ta), (nb, tb))| {
            na == nb && ta.shape() == tb.shape() && ta.data() == tb.data()
        })
}

/// Gradient presence by parameter name, for scoping assertions.
pub fn grad_names<T: Element>(params: &[Param<T>], grads: &Gradients<T>) -> Vec<String> {
    params
        .iter()
        .filter(|p| grads.get(p).is_some())
        .map(|p| p.name())
        .collect()
}
